#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hdl/checkpoint.hpp"

using namespace hdl;

namespace {

std::string temp_file(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

Checkpoint sample_checkpoint() {
  HyperParams hp;
  hp.layers = 2;
  Checkpoint c{init_params(hp, 17), {}};
  c.params.values[3] = 1.0 / 3.0;
  c.params.values[4] = -0.0;
  c.params.values[5] = std::numeric_limits<double>::denorm_min();
  c.meta.system = "pendulum";
  c.meta.n = 3;
  c.meta.dt = 1e-5;
  c.meta.best_epoch = 12;
  c.meta.best_validation = 2.5e-9;
  c.meta.stop_reason = "max epochs reached";
  return c;
}

}  // namespace

TEST(Base64, KnownVectors) {
  auto enc = [](const std::string& s) { return b64::encode(std::vector<std::uint8_t>(s.begin(), s.end())); };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  const auto back = b64::decode("Zm9vYg==");
  EXPECT_EQ(std::string(back.begin(), back.end()), "foob");
  EXPECT_THROW(b64::decode("Zm9"), FormatError);
  EXPECT_THROW(b64::decode("Zm=v"), FormatError);
  EXPECT_THROW(b64::decode("Zm9*"), FormatError);
}

TEST(Checkpoint, DoublesRoundTripBitExact) {
  const std::vector<double> v = {0.1, -0.0, 1e308, std::numeric_limits<double>::denorm_min(), -7.25};
  const auto back = decode_doubles(encode_doubles(v.data(), v.size()));
  ASSERT_EQ(back.size(), v.size());
  EXPECT_EQ(std::memcmp(back.data(), v.data(), v.size() * 8), 0);
  EXPECT_THROW(decode_doubles("Zm9v"), FormatError);
}

TEST(Checkpoint, FileRoundTripIsBitExact) {
  const Checkpoint c = sample_checkpoint();
  const std::string path = temp_file("hdl_ckpt_roundtrip.json");
  save_checkpoint(path, c);
  const Checkpoint back = load_checkpoint(path);
  ASSERT_EQ(back.params.values.size(), c.params.values.size());
  EXPECT_EQ(std::memcmp(back.params.values.data(), c.params.values.data(), c.params.values.size() * 8), 0);
  EXPECT_EQ(back.params.hp.layers, 2);
  EXPECT_EQ(back.params.seed, 17u);
  EXPECT_EQ(back.meta.system, "pendulum");
  EXPECT_EQ(back.meta.dt, 1e-5);
  EXPECT_EQ(back.meta.best_validation, 2.5e-9);
  EXPECT_EQ(checkpoint_to_json(back).dump(), checkpoint_to_json(c).dump());
  std::filesystem::remove(path);
}

TEST(Checkpoint, ReloadedModelGivesIdenticalEnergy) {
  const Checkpoint c = sample_checkpoint();
  const Checkpoint back = checkpoint_from_json(nlohmann::json::parse(checkpoint_to_json(c).dump()));
  const SystemSpec spec = make_spec(SystemKind::Pendulum, 3);
  const PhaseState st = sample_initial(spec, 4);
  const HgnnModel<double> a(HgnnNet<double>::from(c.params), spec), b(HgnnNet<double>::from(back.params), spec);
  EXPECT_EQ(hamiltonian(a, st).H, hamiltonian(b, st).H);
}

TEST(Checkpoint, RangesSurviveRoundTrip) {
  Checkpoint c = sample_checkpoint();
  c.meta.has_ranges = true;
  c.meta.ranges.speed_min = 0.01;
  c.meta.ranges.speed_max = 2.0;
  c.meta.ranges.has_dist[0][0] = true;
  c.meta.ranges.dist_min[0][0] = 0.7;
  c.meta.ranges.dist_max[0][0] = 1.3;
  c.meta.ranges.coord_min = {-1.0, -3.0};
  c.meta.ranges.coord_max = {1.0, 0.0};
  const Checkpoint back = checkpoint_from_json(checkpoint_to_json(c));
  ASSERT_TRUE(back.meta.has_ranges);
  EXPECT_EQ(back.meta.ranges.dist_max[0][0], 1.3);
  EXPECT_TRUE(back.meta.ranges.has_dist[0][0]);
  EXPECT_FALSE(back.meta.ranges.has_dist[1][1]);
  EXPECT_EQ(back.meta.ranges.coord_min, c.meta.ranges.coord_min);
}

TEST(Checkpoint, CorruptionNamesTheField) {
  const nlohmann::json good = checkpoint_to_json(sample_checkpoint());
  auto message = [](const nlohmann::json& j) {
    try {
      checkpoint_from_json(j);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  nlohmann::json j = good;
  const std::string last = make_layout(sample_checkpoint().params.hp).tensors.back().name;
  j["weights"].erase(last);
  EXPECT_NE(message(j).find("weights." + last), std::string::npos) << message(j);
  j = good;
  j["weights"]["em_T.0.w"] = "Zm9v";
  EXPECT_NE(message(j).find("weights.em_T.0.w"), std::string::npos);
  j = good;
  j["hyperparams"]["hidden"] = "wide";
  EXPECT_NE(message(j).find("hyperparams.hidden"), std::string::npos);
  j = good;
  j["metadata"].erase("dt");
  EXPECT_NE(message(j).find("metadata.dt"), std::string::npos);
  j = good;
  j["format"] = "other";
  EXPECT_NE(message(j).find("format"), std::string::npos);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  const std::string path = temp_file("hdl_ckpt_truncated.json");
  save_checkpoint(path, sample_checkpoint());
  std::string text;
  {
    std::ifstream is(path);
    text.assign(std::istreambuf_iterator<char>(is), {});
  }
  {
    std::ofstream os(path, std::ios::trunc);
    os << text.substr(0, text.size() / 2);
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}
