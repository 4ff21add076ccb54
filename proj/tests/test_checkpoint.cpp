#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "msv/checkpoint.hpp"
#include "msv/config_file.hpp"
#include "msv/dataset.hpp"
#include "msv/trainer.hpp"

using namespace msv;

namespace {

RunConfig small_run() {
  RunConfig rc;
  rc.model.num_classes = 3;
  rc.model.channels = {4, 4, 8, 8};
  rc.model.windows = {{{2, 2}, {2, 2}, {4, 4}, {4, 4}}};
  rc.model.d_state = 4;
  rc.train.batch_size = 2;
  return rc;
}

Dataset small_data() {
  SynthOptions so;
  so.count = 4;
  so.height = so.width = 32;
  so.split = "train";
  return make_phantom_dataset(so);
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.step = 7;
  c.tensors.push_back({"a.w", {2, 3}, {1, 2, 3, 4, 5, 6}});
  c.tensors.push_back({"b", {1}, {-0.5f}});
  c.adam_t = 7;
  c.slots.push_back({"a.w", {0.1f, 0, 0, 0, 0, 0.2f}, {1, 1, 1, 1, 1, 1}});
  c.rng_state = "123 456";
  c.config_text = "num_classes = 3\n";
  return c;
}

}  // namespace

TEST(Checkpoint, EncodeDecodeEncodeIsBitwiseStable) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.step, 7u);
  EXPECT_EQ(back.tensors[1].values[0], -0.5f);
  EXPECT_EQ(back.config_text, "num_classes = 3\n");
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, TrainedModelRoundTripsThroughDisk) {
  Trainer t(small_run(), small_data());
  t.step();
  const auto dir = std::filesystem::path(testing::TempDir()) / "msv_ckpt_rt";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.msvm", t.checkpoint());
  const Checkpoint loaded = load_checkpoint(dir / "a.msvm");
  save_checkpoint(dir / "b.msvm", loaded);
  EXPECT_EQ(encode_checkpoint(loaded), encode_checkpoint(t.checkpoint()));
  std::ifstream a(dir / "a.msvm", std::ios::binary), b(dir / "b.msvm", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Checkpoint, FlippedByteFailsChecksum) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(bytes), IntegrityError);
}

TEST(Checkpoint, BadMagicIsFormatError) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, UnsupportedVersionIsFormatError) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[4] = 99;
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, TruncationAndTrailingBytesAreIntegrityErrors) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t cut : {std::size_t(9), bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> shorter(bytes.begin(), bytes.begin() + long(cut));
    EXPECT_THROW(decode_checkpoint(shorter), IntegrityError) << cut;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_checkpoint(longer), IntegrityError);
}

TEST(Checkpoint, ImportRejectsMissingParameter) {
  Trainer t(small_run(), small_data());
  Checkpoint c = t.checkpoint();
  c.tensors.pop_back();
  EXPECT_THROW(import_parameters(t.model().parameters(), c), FormatError);
}
