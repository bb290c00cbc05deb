#include "conflab/grid_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "conflab/error.hpp"

namespace conflab {

namespace fs = std::filesystem;

namespace {

constexpr int kGridFormatVersion = 1;
const std::set<std::string> kManifestKeys = {"version", "manifold", "shape", "field",
                                             "payload", "dtype",    "order"};

std::uint64_t byteswap64(std::uint64_t v) {
  v = ((v & 0x00FF00FF00FF00FFull) << 8) | ((v >> 8) & 0x00FF00FF00FF00FFull);
  v = ((v & 0x0000FFFF0000FFFFull) << 16) | ((v >> 16) & 0x0000FFFF0000FFFFull);
  return (v << 32) | (v >> 32);
}

std::string expected_keys() {
  std::string s;
  for (const auto& k : kManifestKeys) s += (s.empty() ? "" : ", ") + k;
  return s;
}

}  // namespace

GridField::GridField(Manifold m, std::vector<std::size_t> shape, std::vector<double> values)
    : manifold_(std::move(m)), shape_(std::move(shape)), values_(std::move(values)) {
  if (manifold_.kind() == ManifoldKind::Sphere)
    throw InputError("GridField: grids are supported on Torus and Box only");
  if (shape_.size() != static_cast<std::size_t>(manifold_.dim()))
    throw InputError("GridField: shape rank does not match manifold dimension");
  std::size_t total = 1;
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    const std::size_t min_nodes = manifold_.kind() == ManifoldKind::Box ? 2 : 1;
    if (shape_[i] < min_nodes) throw InputError("GridField: too few nodes on an axis");
    total *= shape_[i];
  }
  if (values_.size() != total)
    throw InputError("GridField: expected " + std::to_string(total) + " values, got " +
                     std::to_string(values_.size()));
  for (double v : values_)
    if (!std::isfinite(v)) throw InputError("GridField: non-finite value");
}

double GridField::spacing(std::size_t axis) const {
  if (manifold_.kind() == ManifoldKind::Torus)
    return manifold_.periods()[axis] / static_cast<double>(shape_[axis]);
  return manifold_.extents()[axis].length() / static_cast<double>(shape_[axis] - 1);
}

void GridField::node(std::size_t flat, std::span<double> out) const {
  for (std::size_t i = shape_.size(); i-- > 0;) {
    const std::size_t j = flat % shape_[i];
    flat /= shape_[i];
    const double origin = manifold_.kind() == ManifoldKind::Torus ? 0.0 : manifold_.extents()[i].lo;
    out[i] = origin + static_cast<double>(j) * spacing(i);
  }
}

std::size_t GridField::flat_index(std::span<const std::size_t> idx) const {
  std::size_t k = 0;
  for (std::size_t i = 0; i < shape_.size(); ++i) k = k * shape_[i] + idx[i];
  return k;
}

void write_f64le(const fs::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  std::vector<std::uint64_t> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
    buf[i] = bits;
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(std::uint64_t)));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

std::vector<double> read_f64le(const fs::path& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open payload '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes != expected_count * sizeof(double))
    throw FormatError("payload '" + path.string() + "' has " + std::to_string(bytes) +
                      " bytes, expected " + std::to_string(expected_count * sizeof(double)));
  std::vector<std::uint64_t> buf(expected_count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw FormatError("short read on '" + path.string() + "'");
  std::vector<double> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    auto bits = buf[i];
    if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

void write_grid(const fs::path& manifest, const GridField& grid) {
  fs::path payload = manifest;
  payload.replace_extension(".f64");
  nlohmann::json j;
  j["version"] = kGridFormatVersion;
  j["manifold"] = grid.manifold();
  j["shape"] = grid.shape();
  j["field"] = "logf";
  j["payload"] = payload.filename().string();
  j["dtype"] = "f64le";
  j["order"] = "row-major";
  write_f64le(payload, grid.values());
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + manifest.string() + "' for writing");
  out << j.dump(2) << '\n';
}

GridField read_grid(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open manifest '" + manifest.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest '" + manifest.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw FormatError("manifest must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kManifestKeys.contains(key))
      throw FormatError("manifest has unknown key '" + key + "'; expected keys: " + expected_keys());
  for (const auto& key : kManifestKeys)
    if (!j.contains(key))
      throw FormatError("manifest missing key '" + key + "'; expected keys: " + expected_keys());
  try {
    if (j.at("version").get<int>() != kGridFormatVersion)
      throw FormatError("unsupported manifest version " + j.at("version").dump());
    if (j.at("field").get<std::string>() != "logf")
      throw FormatError("manifest field must be \"logf\", got " + j.at("field").dump());
    if (j.at("dtype").get<std::string>() != "f64le")
      throw FormatError("manifest dtype must be \"f64le\"");
    if (j.at("order").get<std::string>() != "row-major")
      throw FormatError("manifest order must be \"row-major\"");
    Manifold m = manifold_from_json(j.at("manifold"));
    auto shape = j.at("shape").get<std::vector<std::size_t>>();
    std::size_t total = 1;
    for (auto s : shape) total *= s;
    const fs::path payload = manifest.parent_path() / j.at("payload").get<std::string>();
    auto values = read_f64le(payload, total);
    try {
      return GridField(std::move(m), std::move(shape), std::move(values));
    } catch (const InputError& e) {
      throw FormatError(std::string("inconsistent grid: ") + e.what());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

void write_grid_csv(const fs::path& path, const GridField& grid) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  for (std::size_t i = 0; i < grid.dim(); ++i) out << 'x' << (i + 1) << ',';
  out << "f\n";
  std::vector<double> x(grid.dim());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid.node(k, x);
    for (double v : x) out << v << ',';
    out << grid.values()[k] << '\n';
  }
}

GridField read_grid_csv(const fs::path& path, const Manifold& m) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  const auto n = static_cast<std::size_t>(m.dim());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV grid");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("CSV grid: bad number '" + cell + "'");
      }
    }
    if (row.size() != n + 1) throw FormatError("CSV grid: expected " + std::to_string(n + 1) + " columns");
    rows.push_back(std::move(row));
  }
  // Recover the shape from the distinct coordinates per axis.
  std::vector<std::size_t> shape(n);
  std::vector<std::map<double, std::size_t>> axis_index(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::set<double> uniq;
    for (const auto& r : rows) uniq.insert(r[i]);
    std::size_t j = 0;
    for (double v : uniq) axis_index[i][v] = j++;
    shape[i] = uniq.size();
  }
  std::size_t total = 1;
  for (auto s : shape) total *= s;
  if (total != rows.size()) throw FormatError("CSV grid: rows do not form a full tensor grid");
  std::vector<double> values(total, std::nan(""));
  for (const auto& r : rows) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) k = k * shape[i] + axis_index[i][r[i]];
    values[k] = r[n];
  }
  try {
    return GridField(m, std::move(shape), std::move(values));
  } catch (const InputError& e) {
    throw FormatError(std::string("CSV grid inconsistent with manifold: ") + e.what());
  }
}

}  // namespace conflab
