#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plumekit/core.hpp"

namespace plumekit::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "raster IO assumes a little-endian host");

// ---------------------------------------------------------------------------
// Raw f32 payloads
// ---------------------------------------------------------------------------

inline void write_f32(const fs::path& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size() * sizeof(float)));
  if (!out) throw FormatError("write failed: " + path.string());
}

inline std::vector<float> read_f32(const fs::path& path,
                                   std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open: " + path.string());
  const auto bytes = std::size_t(in.tellg());
  if (bytes != expected_count * sizeof(float))
    throw FormatError("unexpected raster size in " + path.string());
  in.seekg(0);
  std::vector<float> data(expected_count);
  in.read(reinterpret_cast<char*>(data.data()), std::streamsize(bytes));
  if (!in) throw FormatError("read failed: " + path.string());
  return data;
}

inline void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("write failed: " + path.string());
}

inline Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw FormatError("bad JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

namespace detail {
inline double require_number(const Json& j, const char* key,
                             const fs::path& where) {
  if (!j.contains(key))
    throw FormatError("missing field '" + std::string(key) + "' in " +
                      where.string());
  if (!j[key].is_number())
    throw FormatError("field '" + std::string(key) + "' is not a number in " +
                      where.string());
  return j[key].get<double>();
}
inline fs::path sidecar_of(const fs::path& raster) {
  fs::path p = raster;
  p.replace_extension(".json");
  return p;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// ConcentrationMap / PlumeSnapshot rasters: <name>.f32 + <name>.json
// ---------------------------------------------------------------------------

inline void write_snapshot(const fs::path& raster_path,
                           const PlumeSnapshot& snap) {
  std::vector<float> data(snap.map.values.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = float(snap.map.values.data()[i]);
  write_f32(raster_path, data);
  Json meta;
  meta["height"] = snap.map.height();
  meta["width"] = snap.map.width();
  meta["pixel_size_m"] = snap.map.pixel_size_m;
  meta["unit"] = "ppb";
  meta["emission_rate_kgph"] = snap.emission_rate_kgph;
  meta["wind_u10_mps"] = snap.wind_u10_mps;
  meta["sim_time_s"] = snap.sim_time_s;
  write_json(detail::sidecar_of(raster_path), meta);
}

inline PlumeSnapshot read_snapshot(const fs::path& raster_path) {
  const fs::path side = detail::sidecar_of(raster_path);
  const Json meta = read_json(side);
  const int h = int(detail::require_number(meta, "height", side));
  const int w = int(detail::require_number(meta, "width", side));
  if (h <= 0 || w <= 0)
    throw FormatError("non-positive shape in " + side.string());
  PlumeSnapshot snap;
  snap.map.pixel_size_m = detail::require_number(meta, "pixel_size_m", side);
  snap.emission_rate_kgph =
      detail::require_number(meta, "emission_rate_kgph", side);
  snap.wind_u10_mps = detail::require_number(meta, "wind_u10_mps", side);
  snap.sim_time_s = detail::require_number(meta, "sim_time_s", side);
  if (!meta.contains("unit") || meta["unit"] != "ppb")
    throw FormatError("missing or unsupported unit in " + side.string());
  const auto data = read_f32(raster_path, std::size_t(h) * w);
  std::vector<double> values(data.begin(), data.end());
  snap.map.values = Grid2d<double>::from_data(h, w, std::move(values));
  try {
    snap.validate();
  } catch (const Error& e) {
    throw FormatError(raster_path.string() + ": " + e.what());
  }
  return snap;
}

/// Plain concentration raster without snapshot provenance (inversion outputs,
/// dataset label maps). Only the geometry fields are required on read.
inline void write_map(const fs::path& raster_path, const ConcentrationMap& map,
                      const Json& extra = Json::object()) {
  std::vector<float> data(map.values.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = float(map.values.data()[i]);
  write_f32(raster_path, data);
  Json meta;
  meta["height"] = map.height();
  meta["width"] = map.width();
  meta["pixel_size_m"] = map.pixel_size_m;
  meta["unit"] = "ppb";
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = *it;
  write_json(detail::sidecar_of(raster_path), meta);
}

inline ConcentrationMap read_map(const fs::path& raster_path) {
  const fs::path side = detail::sidecar_of(raster_path);
  const Json meta = read_json(side);
  const int h = int(detail::require_number(meta, "height", side));
  const int w = int(detail::require_number(meta, "width", side));
  if (h <= 0 || w <= 0)
    throw FormatError("non-positive shape in " + side.string());
  ConcentrationMap map;
  map.pixel_size_m = detail::require_number(meta, "pixel_size_m", side);
  const auto data = read_f32(raster_path, std::size_t(h) * w);
  std::vector<double> values(data.begin(), data.end());
  map.values = Grid2d<double>::from_data(h, w, std::move(values));
  try {
    map.validate();
  } catch (const Error& e) {
    throw FormatError(raster_path.string() + ": " + e.what());
  }
  return map;
}

inline std::optional<double> read_sidecar_wind(const fs::path& raster_path) {
  const fs::path side = detail::sidecar_of(raster_path);
  if (!fs::exists(side)) return std::nullopt;
  const Json meta = read_json(side);
  if (!meta.contains("wind_u10_mps") || !meta["wind_u10_mps"].is_number())
    return std::nullopt;
  return meta["wind_u10_mps"].get<double>();
}

// ---------------------------------------------------------------------------
// HyperCube rasters: band-sequential <name>.f32 + <name>.json
// ---------------------------------------------------------------------------

inline void write_cube(const fs::path& raster_path, const HyperCube& cube) {
  const int h = cube.height(), w = cube.width(), nb = cube.bands();
  std::vector<float> data;
  data.reserve(cube.radiance.size());
  for (int b = 0; b < nb; ++b)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) data.push_back(float(cube.radiance(r, c, b)));
  write_f32(raster_path, data);
  Json meta;
  meta["height"] = h;
  meta["width"] = w;
  meta["bands"] = nb;
  meta["band_centers_nm"] = cube.band_centers_nm;
  meta["band_fwhm_nm"] = cube.band_fwhm_nm;
  write_json(detail::sidecar_of(raster_path), meta);
}

inline HyperCube read_cube(const fs::path& raster_path) {
  const fs::path side = detail::sidecar_of(raster_path);
  const Json meta = read_json(side);
  const int h = int(detail::require_number(meta, "height", side));
  const int w = int(detail::require_number(meta, "width", side));
  const int nb = int(detail::require_number(meta, "bands", side));
  if (h <= 0 || w <= 0 || nb <= 0)
    throw FormatError("non-positive shape in " + side.string());
  if (!meta.contains("band_centers_nm") || !meta.contains("band_fwhm_nm"))
    throw FormatError("missing band metadata in " + side.string());
  HyperCube cube;
  cube.band_centers_nm = meta["band_centers_nm"].get<std::vector<double>>();
  cube.band_fwhm_nm = meta["band_fwhm_nm"].get<std::vector<double>>();
  const auto data = read_f32(raster_path, std::size_t(h) * w * nb);
  cube.radiance = Cube3d<double>(h, w, nb);
  std::size_t i = 0;
  for (int b = 0; b < nb; ++b)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) cube.radiance(r, c, b) = data[i++];
  try {
    cube.validate();
  } catch (const Error& e) {
    throw FormatError(raster_path.string() + ": " + e.what());
  }
  return cube;
}

// ---------------------------------------------------------------------------
// AbsorptionTable: CSV with `wavelength_nm,cross_section_cm2` header plus a
// sidecar JSON carrying {temperature_K, pressure_Pa}.
// ---------------------------------------------------------------------------

inline void write_absorption_csv(const fs::path& csv_path,
                                 const AbsorptionTable& table) {
  std::ofstream out(csv_path);
  if (!out) throw FormatError("cannot open for writing: " + csv_path.string());
  out << "wavelength_nm,cross_section_cm2\n";
  out.precision(17);
  for (std::size_t i = 0; i < table.size(); ++i)
    out << table.wavelength_nm[i] << "," << table.cross_section_cm2[i] << "\n";
  Json side;
  side["temperature_K"] = table.temperature_k;
  side["pressure_Pa"] = table.pressure_pa;
  write_json(detail::sidecar_of(csv_path), side);
}

inline AbsorptionTable read_absorption_csv(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw FormatError("cannot open: " + csv_path.string());
  std::string line;
  if (!std::getline(in, line) ||
      line.find("wavelength_nm,cross_section_cm2") != 0)
    throw FormatError("bad CSV header in " + csv_path.string());
  AbsorptionTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double wl = 0.0, xs = 0.0;
    char comma = 0;
    if (!(ss >> wl >> comma >> xs) || comma != ',')
      throw FormatError("bad CSV row " + std::to_string(lineno) + " in " +
                        csv_path.string());
    table.wavelength_nm.push_back(wl);
    table.cross_section_cm2.push_back(xs);
  }
  const fs::path side = detail::sidecar_of(csv_path);
  const Json meta = read_json(side);
  table.temperature_k = detail::require_number(meta, "temperature_K", side);
  table.pressure_pa = detail::require_number(meta, "pressure_Pa", side);
  try {
    table.validate();
  } catch (const Error& e) {
    throw FormatError(csv_path.string() + ": " + e.what());
  }
  return table;
}

// ---------------------------------------------------------------------------
// Instance labels: run-length encoded masks
// ---------------------------------------------------------------------------

/// Row-major RLE over the instance's bbox-local mask, alternating runs of
/// zeros and ones and starting with a (possibly zero-length) zero run.
inline std::vector<std::int64_t> rle_encode(const MaskGrid& mask) {
  std::vector<std::int64_t> runs;
  std::uint8_t current = 0;
  std::int64_t count = 0;
  for (auto v : mask.data()) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit == current) {
      ++count;
    } else {
      runs.push_back(count);
      current = bit;
      count = 1;
    }
  }
  runs.push_back(count);
  return runs;
}

inline MaskGrid rle_decode(const std::vector<std::int64_t>& runs, int height,
                           int width) {
  MaskGrid mask(height, width, 0);
  std::size_t i = 0;
  std::uint8_t current = 0;
  for (std::int64_t run : runs) {
    if (run < 0) throw FormatError("rle_decode: negative run length");
    for (std::int64_t j = 0; j < run; ++j) {
      if (i >= mask.size()) throw FormatError("rle_decode: runs overflow mask");
      mask.data()[i++] = current;
    }
    current = current ? 0 : 1;
  }
  if (i != mask.size()) throw FormatError("rle_decode: runs underflow mask");
  return mask;
}

inline Json instance_to_json(const PlumeInstance& inst, double pixel_sum) {
  Json j;
  j["bbox"] = {inst.bbox.row_min, inst.bbox.col_min, inst.bbox.row_max,
               inst.bbox.col_max};
  j["rle_mask"] = rle_encode(inst.mask);
  j["area_px"] = inst.area();
  j["pixel_sum_ppb"] = pixel_sum;
  if (inst.emission_rate_kgph) j["rate_kgph"] = *inst.emission_rate_kgph;
  return j;
}

struct LabeledInstance {
  PlumeInstance instance;
  double pixel_sum = 0.0;
};

inline LabeledInstance instance_from_json(const Json& j,
                                          const fs::path& where) {
  if (!j.contains("bbox") || !j["bbox"].is_array() || j["bbox"].size() != 4)
    throw FormatError("bad bbox in " + where.string());
  LabeledInstance out;
  out.instance.bbox = BBox{j["bbox"][0].get<int>(), j["bbox"][1].get<int>(),
                           j["bbox"][2].get<int>(), j["bbox"][3].get<int>()};
  if (!j.contains("rle_mask"))
    throw FormatError("missing rle_mask in " + where.string());
  out.instance.mask =
      rle_decode(j["rle_mask"].get<std::vector<std::int64_t>>(),
                 out.instance.bbox.height(), out.instance.bbox.width());
  if (j.contains("rate_kgph"))
    out.instance.emission_rate_kgph = j["rate_kgph"].get<double>();
  out.pixel_sum = detail::require_number(j, "pixel_sum_ppb", where);
  try {
    out.instance.validate();
  } catch (const Error& e) {
    throw FormatError(where.string() + ": " + e.what());
  }
  return out;
}

/// Byte-level directory comparison; used by determinism tests.
inline bool trees_identical(const fs::path& a, const fs::path& b) {
  auto list = [](const fs::path& root) {
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), root));
    std::sort(rel.begin(), rel.end());
    return rel;
  };
  const auto la = list(a), lb = list(b);
  if (la != lb) return false;
  for (const auto& rel : la) {
    std::ifstream fa(a / rel, std::ios::binary), fb(b / rel, std::ios::binary);
    std::ostringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    if (sa.str() != sb.str()) return false;
  }
  return true;
}

}  // namespace plumekit::io
