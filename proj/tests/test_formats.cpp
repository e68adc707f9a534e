#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <vector>

#include "mlh/codebook.hpp"
#include "mlh/dataio.hpp"
#include "mlh/retrieval.hpp"

using namespace mlh;

// Byte-for-byte layout pins for the on-disk containers: little-endian
// integers and doubles, declared field order, LSB-first label bits, and the
// +1 -> set-bit code convention. Any drift here breaks readers.

TEST_CASE("MLHC codebook byte layout") {
  Codebook cb;
  cb.config = HashConfig{8, 2};
  cb.d = 8;
  cb.seed = 0x0102030405060708ull;
  cb.centers.assign(16, 1);
  for (int j = 8; j < 16; ++j) cb.centers[j] = -1;

  std::vector<std::uint8_t> expected{
      'M', 'L', 'H', 'C',
      0x01, 0x00, 0x00, 0x00,              // version
      0x08, 0x00, 0x00, 0x00,              // q
      0x02, 0x00, 0x00, 0x00,              // c
      0x08, 0x00, 0x00, 0x00,              // d
      0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01,  // seed LE
      0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01, 0x01,  // row 0: +1
      0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff,  // row 1: -1
  };
  REQUIRE(serialize_codebook(cb) == expected);
}

TEST_CASE("MLHB packed-codes byte layout") {
  Tensor codes(1, 8);
  for (std::size_t j = 0; j < 8; ++j) codes(0, j) = j % 2 == 0 ? 1.0 : -1.0;

  std::vector<std::uint8_t> expected{
      'M', 'L', 'H', 'B',
      0x01, 0x00, 0x00, 0x00,  // version
      0x01, 0x00, 0x00, 0x00,  // n
      0x08, 0x00, 0x00, 0x00,  // q
      // bits 0,2,4,6 set (+1 at even positions), zero pad to the u64
      0x55, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
  };
  REQUIRE(serialize_packed(pack(codes)) == expected);
}

TEST_CASE("MLHF feature-file byte layout") {
  FeatureDataset ds;
  ds.feature_dim = 1;
  ds.num_classes = 3;
  ds.features = Tensor(1, 1, 1.0);
  ds.labels = Tensor(1, 3);
  ds.labels(0, 0) = 1.0;
  ds.labels(0, 2) = 1.0;
  ds.split.assign(1, Split::Database);

  std::vector<std::uint8_t> expected{
      'M', 'L', 'H', 'F',
      0x01, 0x00, 0x00, 0x00,  // version
      0x01, 0x00, 0x00, 0x00,  // n
      0x01, 0x00, 0x00, 0x00,  // feature_dim
      0x03, 0x00, 0x00, 0x00,  // c
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xf0, 0x3f,  // 1.0 as f64 LE
      0x05,  // labels {0,2}: bits 0 and 2, LSB-first
  };
  REQUIRE(serialize_features(ds) == expected);
}
