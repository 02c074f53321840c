#pragma once

// Checkpoint documents:
//   {"format": "hdl-checkpoint", "version": 1,
//    "hyperparams": {...}, "seed": u64,
//    "weights": {tensor name: base64 of little-endian float64},
//    "metadata": {...}}

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdl/errors.hpp"
#include "hdl/hgnn.hpp"
#include "hdl/training.hpp"

namespace hdl {

namespace b64 {

inline constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += (i + 1 < bytes.size()) ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (s.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = s[i + k];
      if (c == '=') {
        if (i + 4 != s.size() || k < 2) throw FormatError("misplaced base64 padding");
        v[k] = 0;
        ++pad;
      } else {
        if (pad) throw FormatError("misplaced base64 padding");
        v[k] = val(c);
        if (v[k] < 0) throw FormatError("invalid base64 character");
      }
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back((w >> 16) & 0xff);
    if (pad < 2) out.push_back((w >> 8) & 0xff);
    if (pad < 1) out.push_back(w & 0xff);
  }
  return out;
}

}  // namespace b64

inline std::string encode_doubles(const double* data, std::size_t n) {
  std::vector<std::uint8_t> bytes(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t u;
    std::memcpy(&u, data + i, 8);
    for (int k = 0; k < 8; ++k) bytes[i * 8 + k] = static_cast<std::uint8_t>(u >> (8 * k));
  }
  return b64::encode(bytes);
}

inline std::vector<double> decode_doubles(const std::string& s) {
  const auto bytes = b64::decode(s);
  if (bytes.size() % 8 != 0) throw FormatError("payload is not a whole number of float64 values");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t u = 0;
    for (int k = 0; k < 8; ++k) u |= static_cast<std::uint64_t>(bytes[i * 8 + k]) << (8 * k);
    std::memcpy(&out[i], &u, 8);
  }
  return out;
}

struct CheckpointMeta {
  std::string system;  // kind of the training system
  int n = 0;
  double dt = 0.0;
  bool has_ranges = false;
  DataRanges ranges;
  int best_epoch = -1;
  double best_validation = 0.0;
  std::string stop_reason;
  nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

inline nlohmann::json ranges_to_json(const DataRanges& r) {
  nlohmann::json j;
  j["speed"] = {r.speed_min, r.speed_max};
  j["coord_min"] = r.coord_min;
  j["coord_max"] = r.coord_max;
  nlohmann::json d = nlohmann::json::object();
  for (int a = 0; a < 2; ++a)
    for (int b = a; b < 2; ++b)
      if (r.has_dist[a][b]) d[std::to_string(a) + "-" + std::to_string(b)] = {r.dist_min[a][b], r.dist_max[a][b]};
  j["distance"] = d;
  return j;
}

inline DataRanges ranges_from_json(const nlohmann::json& j) {
  DataRanges r;
  r.speed_min = j.at("speed").at(0).get<double>();
  r.speed_max = j.at("speed").at(1).get<double>();
  r.coord_min = j.at("coord_min").get<std::vector<double>>();
  r.coord_max = j.at("coord_max").get<std::vector<double>>();
  for (auto it = j.at("distance").begin(); it != j.at("distance").end(); ++it) {
    const std::string& key = it.key();
    if (key.size() != 3 || key[1] != '-') throw FormatError("bad species pair '" + key + "'");
    const int a = key[0] - '0', b = key[2] - '0';
    if (a < 0 || a > 1 || b < a || b > 1) throw FormatError("bad species pair '" + key + "'");
    r.has_dist[a][b] = true;
    r.dist_min[a][b] = it.value().at(0).get<double>();
    r.dist_max[a][b] = it.value().at(1).get<double>();
  }
  return r;
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  const ParamLayout lay = make_layout(c.params.hp);
  if (lay.size != c.params.values.size()) throw ShapeError("parameter vector does not match layout");
  nlohmann::json j;
  j["format"] = "hdl-checkpoint";
  j["version"] = 1;
  const HyperParams& hp = c.params.hp;
  j["hyperparams"] = {{"embed", hp.embed},   {"hidden", hp.hidden},   {"depth", hp.depth},
                      {"layers", hp.layers}, {"species", hp.species}, {"dim", hp.dim}};
  j["seed"] = c.params.seed;
  nlohmann::json w = nlohmann::json::object();
  for (const TensorInfo& t : lay.tensors) w[t.name] = encode_doubles(c.params.values.data() + t.offset, t.size);
  j["weights"] = w;
  nlohmann::json m;
  m["system"] = c.meta.system;
  m["n"] = c.meta.n;
  m["dt"] = c.meta.dt;
  if (c.meta.has_ranges) m["ranges"] = ranges_to_json(c.meta.ranges);
  m["best_epoch"] = c.meta.best_epoch;
  m["best_validation"] = c.meta.best_validation;
  m["stop_reason"] = c.meta.stop_reason;
  m["extra"] = c.meta.extra;
  j["metadata"] = m;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint c;
  std::string field = "format";
  try {
    if (j.at("format").get<std::string>() != "hdl-checkpoint") throw FormatError("not an hdl checkpoint");
    field = "version";
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported version");
    field = "hyperparams";
    const auto& h = j.at("hyperparams");
    HyperParams& hp = c.params.hp;
    for (const char* key : {"embed", "hidden", "depth", "layers", "species", "dim"}) {
      field = std::string("hyperparams.") + key;
      const int v = h.at(key).get<int>();
      if (std::string(key) == "embed") hp.embed = v;
      else if (std::string(key) == "hidden") hp.hidden = v;
      else if (std::string(key) == "depth") hp.depth = v;
      else if (std::string(key) == "layers") hp.layers = v;
      else if (std::string(key) == "species") hp.species = v;
      else hp.dim = v;
    }
    field = "hyperparams";
    const ParamLayout lay = make_layout(hp);
    field = "seed";
    c.params.seed = j.at("seed").get<std::uint64_t>();
    c.params.values.assign(lay.size, 0.0);
    const auto& w = j.at("weights");
    for (const TensorInfo& t : lay.tensors) {
      field = "weights." + t.name;
      const auto vals = decode_doubles(w.at(t.name).get<std::string>());
      if (vals.size() != t.size)
        throw FormatError("expected " + std::to_string(t.size) + " values, found " + std::to_string(vals.size()));
      std::copy(vals.begin(), vals.end(), c.params.values.begin() + t.offset);
    }
    field = "weights";
    if (w.size() != lay.tensors.size()) throw FormatError("unexpected extra tensors");
    const auto& m = j.at("metadata");
    field = "metadata.system";
    c.meta.system = m.at("system").get<std::string>();
    field = "metadata.n";
    c.meta.n = m.at("n").get<int>();
    field = "metadata.dt";
    c.meta.dt = m.at("dt").get<double>();
    field = "metadata.ranges";
    if (m.contains("ranges")) {
      c.meta.ranges = ranges_from_json(m.at("ranges"));
      c.meta.has_ranges = true;
    }
    field = "metadata.best_epoch";
    c.meta.best_epoch = m.at("best_epoch").get<int>();
    field = "metadata.best_validation";
    c.meta.best_validation = m.at("best_validation").get<double>();
    field = "metadata.stop_reason";
    c.meta.stop_reason = m.at("stop_reason").get<std::string>();
    field = "metadata.extra";
    c.meta.extra = m.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint field '" + field + "': " + e.what());
  } catch (const FormatError& e) {
    throw FormatError("checkpoint field '" + field + "': " + e.what());
  } catch (const DomainError& e) {
    throw FormatError("checkpoint field '" + field + "': " + e.what());
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os << checkpoint_to_json(c).dump(2) << '\n';
  if (!os) throw FormatError("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace hdl
