#include "ensmooth/io.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "ensmooth/error.hpp"

namespace ensmooth::io {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "payload encoding assumes a little-endian host");

namespace {

std::string crc_string(const std::vector<double>& payload) {
  const auto* bytes = reinterpret_cast<const Bytef*>(payload.data());
  // zlib takes uInt lengths; feed in chunks for large payloads.
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t remaining = payload.size() * sizeof(double);
  while (remaining > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    crc = crc32(crc, bytes, chunk);
    bytes += chunk;
    remaining -= chunk;
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return std::string("crc32:") + buf;
}

std::size_t dim(const json& dims, const char* key) {
  if (!dims.contains(key) || !dims[key].is_number_integer())
    throw MalformedManifest(std::string("manifest dims lacks integer '") + key + "'");
  const auto v = dims[key].get<long long>();
  if (v < 0) throw DimensionMismatch(std::string("negative dimension '") + key + "'");
  return static_cast<std::size_t>(v);
}

double number(const json& dims, const char* key) {
  if (!dims.contains(key) || !dims[key].is_number())
    throw MalformedManifest(std::string("manifest dims lacks number '") + key + "'");
  return dims[key].get<double>();
}

std::size_t expected_count(const std::string& kind, const json& dims) {
  if (kind == "ensemble")
    return dim(dims, "members") * (dim(dims, "params") + dim(dims, "outputs"));
  if (kind == "field") return dim(dims, "nx") * dim(dims, "ny");
  if (kind == "matrix" || kind == "network")
    return dim(dims, "rows") * dim(dims, "cols");
  throw MalformedManifest("unknown artifact kind: " + kind);
}

}  // namespace

ArtifactPaths artifact_paths(const fs::path& base) {
  return {fs::path(base.string() + ".manifest"),
          fs::path(base.string() + ".payload")};
}

void write_artifact(const fs::path& base, const std::string& kind,
                    const json& dims, int iteration,
                    const std::vector<double>& payload, const json& extra) {
  const auto paths = artifact_paths(base);
  if (paths.manifest.has_parent_path())
    fs::create_directories(paths.manifest.parent_path());

  {
    std::ofstream out(paths.payload, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + paths.payload.string());
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!out) throw Error("failed writing " + paths.payload.string());
  }

  json m = extra.is_object() ? extra : json::object();
  m["schema_version"] = kSchemaVersion;
  m["kind"] = kind;
  m["dims"] = dims;
  m["iteration"] = iteration;
  m["payload_file"] = paths.payload.filename().string();
  m["checksum"] = crc_string(payload);
  write_text(paths.manifest, m.dump(2) + "\n");
}

Artifact read_artifact(const fs::path& base, const std::string& expected_kind) {
  const auto paths = artifact_paths(base);
  Artifact a;
  try {
    a.manifest = json::parse(read_text(paths.manifest));
  } catch (const json::exception& e) {
    throw MalformedManifest("cannot parse " + paths.manifest.string() + ": " + e.what());
  }
  const json& m = a.manifest;
  for (const char* key :
       {"schema_version", "kind", "dims", "iteration", "payload_file", "checksum"})
    if (!m.is_object() || !m.contains(key))
      throw MalformedManifest(std::string("manifest missing '") + key + "'");
  if (m["schema_version"] != kSchemaVersion)
    throw MalformedManifest("unsupported schema_version");
  if (!m["kind"].is_string() || m["kind"] != expected_kind)
    throw MalformedManifest("expected a '" + expected_kind + "' artifact");
  if (!m["dims"].is_object() || !m["payload_file"].is_string() ||
      !m["checksum"].is_string() || !m["iteration"].is_number_integer())
    throw MalformedManifest("manifest fields have wrong types");

  const std::size_t count = expected_count(expected_kind, m["dims"]);
  const fs::path payload_path =
      paths.manifest.parent_path() / m["payload_file"].get<std::string>();

  std::ifstream in(payload_path, std::ios::binary);
  if (!in) throw TruncatedPayload("missing payload " + payload_path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % sizeof(double) != 0 || bytes < count * sizeof(double))
    throw TruncatedPayload("payload holds " + std::to_string(bytes) +
                           " bytes, manifest implies " +
                           std::to_string(count * sizeof(double)));
  if (bytes > count * sizeof(double))
    throw DimensionMismatch("payload larger than manifest dims imply");
  a.payload.resize(count);
  in.read(reinterpret_cast<char*>(a.payload.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw TruncatedPayload("short read on " + payload_path.string());
  if (crc_string(a.payload) != m["checksum"].get<std::string>())
    throw ChecksumMismatch("payload checksum mismatch for " + payload_path.string());
  return a;
}

void save_ensemble(const Ensemble& e, const fs::path& base) {
  e.validate();
  const auto np = e.params.size();
  std::vector<double> payload(np + (e.outputs ? e.outputs->size() : 0));
  std::memcpy(payload.data(), e.params.data(), np * sizeof(double));
  if (e.outputs)
    std::memcpy(payload.data() + np, e.outputs->data(),
                e.outputs->size() * sizeof(double));
  json dims = {{"params", e.param_dim()},
               {"members", e.members()},
               {"outputs", e.output_dim()}};
  write_artifact(base, "ensemble", dims, e.iteration, payload);
}

Ensemble load_ensemble(const fs::path& base) {
  Artifact a = read_artifact(base, "ensemble");
  const json& dims = a.manifest["dims"];
  const auto nm = static_cast<Eigen::Index>(dim(dims, "params"));
  const auto ne = static_cast<Eigen::Index>(dim(dims, "members"));
  const auto ny = static_cast<Eigen::Index>(dim(dims, "outputs"));
  Ensemble e;
  e.iteration = a.manifest["iteration"].get<int>();
  e.params = Eigen::Map<const Eigen::MatrixXd>(a.payload.data(), nm, ne);
  if (ny > 0)
    e.outputs = Eigen::Map<const Eigen::MatrixXd>(a.payload.data() + nm * ne, ny, ne);
  return e;
}

void save_field(const ScalarField& f, const fs::path& base) {
  const auto& g = f.grid();
  json dims = {{"nx", g.nx()}, {"ny", g.ny()}, {"lx", g.lx()}, {"ly", g.ly()}};
  std::vector<double> payload(f.values().data(),
                              f.values().data() + f.values().size());
  write_artifact(base, "field", dims, 0, payload);
}

ScalarField load_field(const fs::path& base) {
  Artifact a = read_artifact(base, "field");
  const json& dims = a.manifest["dims"];
  Grid2D grid(static_cast<int>(dim(dims, "nx")), static_cast<int>(dim(dims, "ny")),
              number(dims, "lx"), number(dims, "ly"));
  return ScalarField(grid, Eigen::Map<const Eigen::VectorXd>(
                               a.payload.data(),
                               static_cast<Eigen::Index>(a.payload.size())));
}

void save_matrix(const Eigen::MatrixXd& mat, const fs::path& base,
                 const json& extra) {
  json dims = {{"rows", mat.rows()}, {"cols", mat.cols()}};
  std::vector<double> payload(mat.data(), mat.data() + mat.size());
  write_artifact(base, "matrix", dims, 0, payload, extra);
}

Eigen::MatrixXd load_matrix(const fs::path& base, json* manifest) {
  Artifact a = read_artifact(base, "matrix");
  const json& dims = a.manifest["dims"];
  Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(
      a.payload.data(), static_cast<Eigen::Index>(dim(dims, "rows")),
      static_cast<Eigen::Index>(dim(dims, "cols")));
  if (manifest) *manifest = std::move(a.manifest);
  return m;
}

void save_observations(const ObservationSet& obs, const fs::path& path) {
  obs.validate();
  json j;
  j["values"] = std::vector<double>(obs.values.data(), obs.values.data() + obs.size());
  j["noise_std"] =
      std::vector<double>(obs.noise_std.data(), obs.noise_std.data() + obs.size());
  json labels = json::array();
  for (const auto& l : obs.labels)
    labels.push_back({{"kind", to_string(l.kind)}, {"x", l.x}, {"y", l.y}, {"t", l.t}});
  j["labels"] = labels;
  write_text(path, j.dump(1) + "\n");
}

ObservationSet load_observations(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
    ObservationSet obs;
    const auto v = j.at("values").get<std::vector<double>>();
    const auto s = j.at("noise_std").get<std::vector<double>>();
    obs.values = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    obs.noise_std = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    for (const auto& l : j.at("labels"))
      obs.labels.push_back({obs_kind_from_string(l.at("kind").get<std::string>()),
                            l.at("x").get<double>(), l.at("y").get<double>(),
                            l.at("t").get<double>()});
    obs.validate();
    return obs;
  } catch (const json::exception& e) {
    throw MalformedManifest("bad observation file " + path.string() + ": " + e.what());
  }
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf, end);
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : columns_(header.size()) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::trunc);
  if (!out_) throw Error("cannot open " + path.string());
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw InvalidInput("csv row has wrong column count");
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out_ << ',';
    out_ << cells[k];
  }
  out_ << '\n';
  if (!out_) throw Error("csv write failed");
}

void CsvWriter::row(const std::vector<double>& cells) {
  std::vector<std::string> s;
  s.reserve(cells.size());
  for (double v : cells) s.push_back(format_number(v));
  row(s);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace ensmooth::io
