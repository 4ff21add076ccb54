#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "msv/config_file.hpp"
#include "msv/dataset.hpp"
#include "msv/metrics_csv.hpp"
#include "msv/pgm.hpp"
#include "msv/phantom.hpp"

using namespace msv;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::path(testing::TempDir()) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) {
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST(Pgm, TwoByTwoExample) {
  std::string file = "P5\n2 2\n255\n";
  file += std::string("\x00\x80\xff\x40", 4);
  GrayImage img = decode_pgm(bytes_of(file));
  ASSERT_EQ(img.width, 2u);
  Tensor t = image_to_tensor(img);
  EXPECT_FLOAT_EQ(t[0], 0);
  EXPECT_FLOAT_EQ(t[1], 128.0f / 255);
  EXPECT_FLOAT_EQ(t[2], 1);
  EXPECT_FLOAT_EQ(t[3], 64.0f / 255);
  Tensor m = mask_to_tensor(img);
  EXPECT_EQ(m[1], 128);
}

TEST(Pgm, WriteReadRoundTripIsBitwise) {
  GrayImage img{3, 2, {1, 2, 3, 250, 251, 0}};
  const fs::path dir = temp_dir("msv_pgm_rt");
  write_pgm(dir / "a.pgm", img);
  EXPECT_EQ(read_pgm(dir / "a.pgm"), img);
  write_pgm(dir / "b.pgm", read_pgm(dir / "a.pgm"));
  EXPECT_EQ(slurp(dir / "a.pgm"), slurp(dir / "b.pgm"));
}

TEST(Pgm, HeaderCommentsAreSkipped) {
  std::string file = "P5 # comment\n1 1\n255\n";
  file += '\x07';
  EXPECT_EQ(decode_pgm(bytes_of(file)).pixels[0], 7);
}

TEST(Pgm, TruncatedPayloadIsIntegrityError) {
  std::string file = "P5\n2 2\n255\n";
  file += std::string("\x00\x80\xff", 3);
  EXPECT_THROW(decode_pgm(bytes_of(file)), IntegrityError);
}

TEST(Pgm, BadMagicAndMaxvalNameByteOffset) {
  try {
    decode_pgm(bytes_of("P2\n1 1\n255\n\x01"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte 0"), std::string::npos) << e.what();
  }
  try {
    decode_pgm(bytes_of("P5\n1 1\n65535\n\x01\x01"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte 7"), std::string::npos) << e.what();
  }
}

TEST(Phantom, SameSeedIsBitwiseIdentical) {
  PhantomSpec spec = random_phantom_spec(42, 3);
  Phantom a = generate_phantom(spec);
  Phantom b = generate_phantom(spec);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  spec.seed = 43;
  EXPECT_NE(generate_phantom(spec).image, a.image);
}

TEST(Phantom, CavityAreaMatchesEllipseArea) {
  PhantomSpec spec;
  spec.a = 20;
  spec.b = 10;
  spec.theta = 0;
  Phantom p = generate_phantom(spec);
  std::size_t cavity = 0;
  for (auto v : p.mask.pixels) cavity += v == 1;
  const double area = M_PI * 20 * 10;
  EXPECT_NEAR(double(cavity), area, 0.03 * area);
}

TEST(Phantom, ZeroSpeckleGivesNoiselessMap) {
  PhantomSpec spec;
  spec.speckle = 0;
  spec.blur_radius = 0;
  Phantom p = generate_phantom(spec);
  for (std::size_t i = 0; i < p.mask.pixels.size(); ++i) {
    const std::uint8_t expect = p.mask.pixels[i] == 0 ? 90 : p.mask.pixels[i] == 1 ? 30 : 190;
    ASSERT_EQ(p.image.pixels[i], expect) << i;
  }
  // With blur only, the image is still independent of the seed.
  spec.blur_radius = 1.5;
  Phantom q = generate_phantom(spec);
  spec.seed = 99;
  EXPECT_EQ(generate_phantom(spec).image, q.image);
}

TEST(Phantom, MaskClassesStayBelowClassCount) {
  for (std::size_t classes : {2u, 3u}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Phantom p = generate_phantom(random_phantom_spec(seed, classes));
      for (auto v : p.mask.pixels) ASSERT_LT(v, classes);
    }
  }
}

TEST(Phantom, OutOfCanvasSpecIsRejected) {
  PhantomSpec spec;
  spec.cx = 5;
  EXPECT_THROW(generate_phantom(spec), ConfigError);
  spec = PhantomSpec{};
  spec.a = 2;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(MetricsCsv, FormatAndLineCount) {
  std::vector<MetricsRow> rows = {{10, "train", "1", 1.0, 0.5, 0.25, 0.6},
                                  {10, "train", "mean", 0.125, 0.5, 0.0, 0.5}};
  std::ostringstream os;
  write_metrics_csv(os, rows);
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.substr(0, text.find('\n')), kMetricsHeader);
  EXPECT_NE(text.find("10,train,1,1.0,0.5,0.25,0.6\n"), std::string::npos) << text;
  EXPECT_EQ(format_real(1.0), "1.0");
  EXPECT_EQ(format_real(0), "0.0");
  std::istringstream in(text);
  const auto back = parse_metrics_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_NEAR(back[1].dice, 0.125, 1e-9);
  EXPECT_EQ(back, rows);
}

TEST(MetricsCsv, RejectsForeignHeader) {
  std::istringstream in("step,dice\n1,0.5\n");
  EXPECT_THROW(parse_metrics_csv(in), FormatError);
}

TEST(ConfigFile, FormatParseRoundTrip) {
  RunConfig c;
  c.model.channels = {8, 16, 32, 64};
  c.model.epsilon = real(0.25);
  c.model.use_msaa = false;
  c.model.msaa_placement = MsaaPlacement::kTop;
  c.train.adam.lr = real(3e-4);
  c.train.steps = 123;
  const RunConfig back = parse_config(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
  EXPECT_EQ(back.model.channels[3], 64u);
  EXPECT_FALSE(back.model.use_msaa);
  EXPECT_EQ(back.train.steps, 123u);
}

TEST(ConfigFile, UnknownKeyAndBadValueAreErrors) {
  EXPECT_THROW(parse_config("bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("steps = many\n"), ConfigError);
  EXPECT_THROW(parse_config("channels = 8,16\n"), ConfigError);
  EXPECT_NO_THROW(parse_config("# comment\n\nsteps = 3\n"));
}

TEST(Dataset, SplitsByIndex) {
  EXPECT_EQ(split_for_index(0), "train");
  EXPECT_EQ(split_for_index(8), "val");
  EXPECT_EQ(split_for_index(19), "test");
}

TEST(Dataset, SynthWriteIsDeterministic) {
  SynthOptions so;
  so.count = 4;
  so.seed = 7;
  so.height = so.width = 32;
  const fs::path a = temp_dir("msv_synth_a"), b = temp_dir("msv_synth_b");
  write_dataset(a, make_phantom_dataset(so), so);
  write_dataset(b, make_phantom_dataset(so), so);
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
  }
  Dataset loaded = load_dataset(a);
  EXPECT_EQ(loaded.size(), 4u);
  EXPECT_EQ(loaded.classes, 3u);
}

TEST(Dataset, MaskValueAtClassCountIsDataError) {
  SynthOptions so;
  so.count = 1;
  so.classes = 2;
  so.height = so.width = 32;
  const fs::path dir = temp_dir("msv_bad_mask");
  Dataset d = make_phantom_dataset(so);
  d.samples[0].mask.pixels[5] = 2;
  write_dataset(dir, d, so);
  EXPECT_THROW(load_dataset(dir), DataError);
}

TEST(Dataset, BatchStacksSamples) {
  SynthOptions so;
  so.count = 3;
  so.height = so.width = 32;
  Dataset d = make_phantom_dataset(so);
  const std::size_t idx[] = {2, 0};
  Batch b = d.batch(idx);
  EXPECT_EQ(b.images.shape(), (Shape{2, 1, 32, 32}));
  EXPECT_EQ(b.labels.n, 2u);
  EXPECT_EQ(b.labels.values[0], d.samples[2].mask.pixels[0]);
}
