#ifndef MUFM_MUFM_HPP
#define MUFM_MUFM_HPP

#include "mufm/dataset.hpp"
#include "mufm/embedding.hpp"
#include "mufm/embedding_file.hpp"
#include "mufm/error.hpp"
#include "mufm/evaluation.hpp"
#include "mufm/extractor.hpp"
#include "mufm/imaging.hpp"
#include "mufm/knn_index.hpp"
#include "mufm/match_report.hpp"
#include "mufm/matcher.hpp"
#include "mufm/service.hpp"

#endif  // MUFM_MUFM_HPP
