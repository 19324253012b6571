/*
 * Copyright 2026 The specdapt Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Binary containers.
//
//   SPDA1 (datasets): "SPDA1", u32 version, u32 n_spectra, u32 n_bins,
//     u32 n_classes, f64 e_min, f64 e_max, f32 counts[n_spectra][n_bins],
//     f32 labels[n_spectra][n_classes], f32 live_times[n_spectra].
//     A JSON sidecar (<file>.json) carries class names and provenance.
//
//   SPDW1 (parameter checkpoints): "SPDW1", u32 version, u32 n_params, then per
//     parameter u16 name length, name bytes, u8 rank, u32 dims[rank],
//     f64 values; then one u8 trainable flag per parameter, in order.
//
// All integers and floats are little-endian.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "specdapt/autodiff.hpp"
#include "specdapt/core.hpp"
#include "specdapt/spectra.hpp"

namespace specdapt::io {

inline constexpr std::string_view kDatasetMagic = "SPDA1";
inline constexpr std::string_view kCheckpointMagic = "SPDW1";
inline constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  template <typename T>
  void put(T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf_.insert(buf_.end(), raw, raw + sizeof(T));
  }
  const std::vector<char>& buffer() const { return buf_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw ValidationError("failed writing '" + path.string() + "'");
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path.string());
  }

  void expect_magic(std::string_view magic) {
    if (data_.size() < magic.size() ||
        std::string_view(data_.data(), magic.size()) != magic)
      throw CorruptFileError("'" + origin_ + "' is not a " + std::string(magic) + " file");
    pos_ = magic.size();
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  void expect_end() const {
    if (pos_ != data_.size())
      throw CorruptFileError("'" + origin_ + "' has trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CorruptFileError("'" + origin_ + "' is truncated");
  }

  std::vector<char> data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

// ---- checkpoints ----------------------------------------------------------

inline ByteWriter encode_checkpoint(const ad::ParamStore& params) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params.all()) {
    require(p.name.size() <= 0xffff, "parameter name too long");
    require(p.value.rank() <= 0xff, "parameter rank too large");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.value.rank()));
    for (auto d : p.value.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : p.value.values) w.put<double>(v);
  }
  for (const auto& p : params.all()) w.put<std::uint8_t>(p.trainable ? 1 : 0);
  return w;
}

inline void write_checkpoint(const std::filesystem::path& path, const ad::ParamStore& params) {
  encode_checkpoint(params).save(path);
}

inline ad::ParamStore decode_checkpoint(ByteReader r) {
  r.expect_magic(kCheckpointMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw CorruptFileError("unsupported checkpoint version " + std::to_string(version));
  const auto n = r.get<std::uint32_t>();
  std::vector<std::pair<std::string, ad::Tensor>> entries;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str(r.get<std::uint16_t>());
    const auto rank = r.get<std::uint8_t>();
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    std::vector<double> values(ad::numel(shape));
    for (auto& v : values) v = r.get<double>();
    entries.emplace_back(std::move(name), ad::Tensor(std::move(shape), std::move(values)));
  }
  ad::ParamStore store;
  for (auto& [name, t] : entries) {
    const auto flag = r.get<std::uint8_t>();
    if (flag > 1) throw CorruptFileError("bad trainable flag in checkpoint");
    if (store.contains(name)) throw CorruptFileError("duplicate parameter '" + name + "'");
    store.add(name, std::move(t), flag == 1);
  }
  r.expect_end();
  return store;
}

inline ad::ParamStore read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(ByteReader::from_file(path));
}

// ---- datasets ---------------------------------------------------------------

struct DatasetProvenance {
  std::uint64_t master_seed = 0;
  std::string config_hash;
};

inline ByteWriter encode_dataset(const spectra::LabeledDataset& ds) {
  ds.validate(1e-6);
  const std::size_t n_bins = ds.spectra.empty() ? 0 : ds.spectra.front().counts.size();
  const spectra::EnergyGrid grid = ds.spectra.empty() ? spectra::EnergyGrid{} : ds.spectra.front().grid;
  ByteWriter w;
  w.bytes(kDatasetMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(n_bins));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.classes.size()));
  w.put<double>(grid.e_min);
  w.put<double>(grid.e_max);
  for (const auto& s : ds.spectra) {
    require(s.counts.size() == n_bins && s.grid == grid, "all spectra must share one grid");
    for (double c : s.counts) w.put<float>(static_cast<float>(c));
  }
  for (const auto& row : ds.labels)
    for (double v : row) w.put<float>(static_cast<float>(v));
  for (const auto& s : ds.spectra) w.put<float>(static_cast<float>(s.live_time));
  return w;
}

inline nlohmann::json dataset_sidecar(const spectra::LabeledDataset& ds,
                                      const DatasetProvenance& prov) {
  return {{"format", std::string(kDatasetMagic)},
          {"classes", ds.classes},
          {"domain_tag", spectra::to_string(ds.domain_tag)},
          {"split_tag", spectra::to_string(ds.split_tag)},
          {"master_seed", prov.master_seed},
          {"config_hash", prov.config_hash}};
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptFileError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_dataset(const std::filesystem::path& path, const spectra::LabeledDataset& ds,
                          const DatasetProvenance& prov) {
  encode_dataset(ds).save(path);
  write_text(sidecar_path(path), dataset_sidecar(ds, prov).dump(2) + "\n");
}

struct LoadedDataset {
  spectra::LabeledDataset data;
  DatasetProvenance provenance;
};

inline spectra::LabeledDataset decode_dataset(ByteReader r, const nlohmann::json& sidecar) {
  r.expect_magic(kDatasetMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw CorruptFileError("unsupported dataset version " + std::to_string(version));
  const auto n = r.get<std::uint32_t>();
  const auto n_bins = r.get<std::uint32_t>();
  const auto n_classes = r.get<std::uint32_t>();
  spectra::EnergyGrid grid{n_bins, r.get<double>(), 0.0};
  grid.e_max = r.get<double>();
  spectra::LabeledDataset ds;
  try {
    ds.classes = sidecar.at("classes").get<std::vector<std::string>>();
    ds.domain_tag = spectra::domain_from_string(sidecar.at("domain_tag").get<std::string>());
    ds.split_tag = spectra::split_from_string(sidecar.at("split_tag").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("dataset sidecar is malformed: ") + e.what());
  } catch (const ValidationError& e) {
    throw CorruptFileError(std::string("dataset sidecar is malformed: ") + e.what());
  }
  if (ds.classes.size() != n_classes)
    throw CorruptFileError("sidecar class count does not match the dataset header");
  ds.spectra.resize(n);
  for (auto& s : ds.spectra) {
    s.grid = grid;
    s.counts.resize(n_bins);
    for (auto& c : s.counts) c = r.get<float>();
  }
  ds.labels.assign(n, std::vector<double>(n_classes));
  for (auto& row : ds.labels)
    for (auto& v : row) v = r.get<float>();
  for (auto& s : ds.spectra) s.live_time = r.get<float>();
  r.expect_end();
  try {
    ds.validate(1e-6);
  } catch (const ValidationError& e) {
    throw CorruptFileError(std::string("dataset content invalid: ") + e.what());
  }
  return ds;
}

inline LoadedDataset read_dataset(const std::filesystem::path& path) {
  nlohmann::json side = read_json(sidecar_path(path));
  LoadedDataset out;
  out.data = decode_dataset(ByteReader::from_file(path), side);
  out.provenance.master_seed = side.value("master_seed", std::uint64_t{0});
  out.provenance.config_hash = side.value("config_hash", std::string());
  return out;
}

}  // namespace specdapt::io
