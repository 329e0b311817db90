#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include "mufm/dataset.hpp"
#include "test_util.hpp"

using namespace mufm;
using mufm::testing::kFixtures;
using mufm::testing::TempDir;

namespace fs = std::filesystem;

TEST(Naming, ParseImageName) {
  auto n = parse_image_name("alice__001");
  EXPECT_EQ(n.subject, "alice");
  EXPECT_EQ(n.image_id, "001");
  n = parse_image_name("bob_smith__a__b");
  EXPECT_EQ(n.subject, "bob_smith");
  EXPECT_EQ(n.image_id, "a__b");
  n = parse_image_name("carol");
  EXPECT_EQ(n.subject, "carol");
  EXPECT_EQ(n.image_id, "0");
  EXPECT_EQ(make_image_id(MaskStatus::Masked, "a", "1"), "m:a__1");
  EXPECT_EQ(make_image_id(MaskStatus::Unmasked, "a", "1"), "u:a__1");
}

TEST(MaskStatusText, ParseAndPrint) {
  EXPECT_EQ(parse_mask_status("masked"), MaskStatus::Masked);
  EXPECT_EQ(parse_mask_status("with_mask"), MaskStatus::Masked);
  EXPECT_EQ(parse_mask_status("without_mask"), MaskStatus::Unmasked);
  EXPECT_EQ(parse_mask_status(""), MaskStatus::Unknown);
  EXPECT_THROW(parse_mask_status("maybe"), Error);
  EXPECT_EQ(to_string(MaskStatus::Unmasked), "unmasked");
}

TEST(Prepare, ShippedRawFixture) {
  TempDir tmp;
  const auto s = prepare_dataset(kFixtures / "raw", tmp / "data");
  EXPECT_TRUE(s.failures.empty());
  ASSERT_EQ(s.rows.size(), 6u);
  const auto rows = scan_dataset(tmp / "data");
  EXPECT_EQ(rows, s.rows);
  int masked = 0;
  for (const auto& r : rows) {
    masked += r.mask_status == MaskStatus::Masked;
    const ImageRecord rec = load_record(tmp / "data", r);
    EXPECT_EQ(rec.image.channels, 3);
    EXPECT_EQ(fs::path(r.path).extension(), ".png");
    // Every record becomes an extractor-ready tensor.
    const Tensor3 t = preprocess(rec, {});
    EXPECT_EQ(t.height, 224);
    EXPECT_EQ(t.width, 224);
  }
  EXPECT_EQ(masked, 3);
  EXPECT_EQ(rows.front().id, "m:alice__001");
}

TEST(Prepare, NestedFoldersCaseAndFailures) {
  TempDir tmp;
  const fs::path src = tmp / "raw";
  fs::create_directories(src / "Masked" / "dave");
  fs::create_directories(src / "UNMASKED");
  fs::create_directories(src / "other");
  const Image img(6, 4, 3, 90);
  write_file_atomic(src / "Masked" / "dave" / "shot1.png", encode_png(img));
  write_file_atomic(src / "UNMASKED" / "dave__1.png", encode_png(img));
  write_file_atomic(src / "UNMASKED" / "broken.png", std::string_view("not an image"));
  write_file_atomic(src / "other" / "x__1.png", encode_png(img));
  const auto s = prepare_dataset(src, tmp / "data");
  ASSERT_EQ(s.rows.size(), 2u);
  EXPECT_EQ(s.rows[0].id, "m:dave__shot1");
  EXPECT_EQ(s.rows[1].id, "u:dave__1");
  ASSERT_EQ(s.failures.size(), 1u);
  EXPECT_NE(s.failures[0].first.find("broken"), std::string::npos);
}

TEST(Prepare, DuplicateIdsRecorded) {
  TempDir tmp;
  const fs::path src = tmp / "raw";
  fs::create_directories(src / "with_mask");
  const Image img(3, 3, 3, 1);
  write_file_atomic(src / "with_mask" / "eve__1.png", encode_png(img));
  std::vector<std::uint8_t> bmp;
  cv::imencode(".bmp", cv::Mat(3, 3, CV_8UC3, cv::Scalar(1, 1, 1)), bmp);
  write_file_atomic(src / "with_mask" / "eve__1.bmp", bmp);
  const auto s = prepare_dataset(src, tmp / "data");
  EXPECT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.failures.size(), 1u);
}

TEST(Prepare, MissingSourceIsError) {
  TempDir tmp;
  EXPECT_THROW(prepare_dataset(tmp / "nope", tmp / "out"), Error);
}

TEST(Manifest, RoundTripAndValidation) {
  TempDir tmp;
  const std::vector<ManifestRow> rows{{"m:a__1", "a, the first", MaskStatus::Masked, "with_mask/a__1.png"},
                                      {"u:a__1", "a, the first", MaskStatus::Unmasked, "without_mask/a__1.png"}};
  write_file_atomic(tmp / "manifest.csv", manifest_csv(rows));
  EXPECT_EQ(load_manifest(tmp / "manifest.csv"), rows);
  write_file_atomic(tmp / "bad.csv", std::string_view("id,subject\n"));
  EXPECT_THROW(load_manifest(tmp / "bad.csv"), Error);
  write_file_atomic(tmp / "dup.csv", manifest_csv({rows[0], rows[0]}));
  EXPECT_THROW(load_manifest(tmp / "dup.csv"), Error);
}

TEST(Scan, WithoutManifestUsesFolders) {
  TempDir tmp;
  fs::create_directories(tmp / "with_mask");
  fs::create_directories(tmp / "without_mask");
  write_file_atomic(tmp / "with_mask" / "z__2.png", encode_png(Image(2, 2, 3)));
  write_file_atomic(tmp / "without_mask" / "z__2.png", encode_png(Image(2, 2, 3)));
  const auto rows = scan_dataset(tmp.path());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].id, "m:z__2");
  EXPECT_EQ(rows[1].subject, "z");
}

TEST(Augment, DatasetCopiesAreSeeded) {
  TempDir tmp;
  prepare_dataset(kFixtures / "raw", tmp / "data");
  const auto a = augment_dataset(tmp / "data", tmp / "a", 2, 42);
  const auto b = augment_dataset(tmp / "data", tmp / "b", 2, 42);
  ASSERT_EQ(a.size(), 18u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[1].id, "m:alice__001-aug1");
  for (const auto& r : a) {
    EXPECT_EQ(read_file_bytes(tmp / "a" / r.path), read_file_bytes(tmp / "b" / r.path));
    const auto orig = load_record(tmp / "data", scan_dataset(tmp / "data")[0]);
    (void)orig;
  }
  EXPECT_EQ(scan_dataset(tmp / "a").size(), 18u);
  // Originals are byte-identical copies.
  EXPECT_EQ(decode_image(read_file_bytes(tmp / "a" / a[0].path)),
            decode_image(read_file_bytes(tmp / "data" / scan_dataset(tmp / "data")[0].path)));
}
