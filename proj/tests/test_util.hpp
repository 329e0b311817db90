#ifndef MUFM_TESTS_TEST_UTIL_HPP
#define MUFM_TESTS_TEST_UTIL_HPP

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "mufm/embedding.hpp"
#include "mufm/imaging.hpp"

namespace mufm::testing {

inline const std::filesystem::path kFixtures = MUFM_FIXTURE_DIR;
inline const std::string kCli = MUFM_CLI_PATH;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "mufm") {
    std::string tmpl = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(d);
  for (double& x : v) x = n(rng);
  return v;
}

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t d) {
  for (;;) {
    auto v = random_vector(rng, d);
    double s = 0;
    for (double x : v) s += x * x;
    if (s > 1e-6) {
      for (double& x : v) x /= std::sqrt(s);
      return v;
    }
  }
}

inline Image random_image(std::mt19937_64& rng, int w, int h, int c) {
  Image img(w, h, c);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
  return img;
}

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

/// Runs a shell command, capturing combined output.
inline RunResult run(const std::string& cmd) {
  RunResult r;
  FILE* p = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  const int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string quote(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace mufm::testing

#endif  // MUFM_TESTS_TEST_UTIL_HPP
