#include "tdgp/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "tdgp/errors.hpp"

namespace tdgp {

namespace {

// all scalar fields are little-endian; this code assumes a little-endian host
// (asserted at startup via the magic round-trip in the tests)

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw format_error("unexpected end of file reading " + what);
  return v;
}

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void take_bytes(std::istream& is, void* p, std::size_t n, const std::string& what) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw format_error("unexpected end of file reading " + what);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw io_error("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open '" + path + "' for reading");
  return is;
}

void write_raster_header(std::ostream& os, RasterKind kind, std::uint32_t x,
                         std::uint32_t y, std::uint32_t z, std::uint32_t t,
                         const Spacing& s) {
  os.write("TDGP", 4);
  put<std::uint16_t>(os, kRasterVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(kind));
  put<std::uint32_t>(os, x);
  put<std::uint32_t>(os, y);
  put<std::uint32_t>(os, z);
  put<std::uint32_t>(os, t);
  put<double>(os, s.dx);
  put<double>(os, s.dy);
  put<double>(os, s.dz);
}

struct RasterHeader {
  RasterKind kind;
  std::uint32_t x, y, z, t;
  Spacing spacing;
};

RasterHeader read_raster_header(std::istream& is, const std::string& path) {
  char magic[4];
  take_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "TDGP", 4) != 0)
    throw format_error("'" + path + "' is not a raster file (bad magic)");
  auto version = take<std::uint16_t>(is, "version");
  if (version != kRasterVersion)
    throw format_error("'" + path + "': unsupported raster version " +
                       std::to_string(version));
  auto kind = take<std::uint8_t>(is, "kind");
  if (kind > 3) throw format_error("'" + path + "': unknown raster kind");
  RasterHeader h;
  h.kind = static_cast<RasterKind>(kind);
  h.x = take<std::uint32_t>(is, "dims");
  h.y = take<std::uint32_t>(is, "dims");
  h.z = take<std::uint32_t>(is, "dims");
  h.t = take<std::uint32_t>(is, "dims");
  h.spacing.dx = take<double>(is, "spacing");
  h.spacing.dy = take<double>(is, "spacing");
  h.spacing.dz = take<double>(is, "spacing");
  if (h.x == 0 || h.y == 0 || h.z == 0 || h.t == 0)
    throw format_error("'" + path + "': zero dimension");
  return h;
}

void expect_kind(const RasterHeader& h, RasterKind want, const std::string& path) {
  if (h.kind != want)
    throw format_error("'" + path + "': raster kind " +
                       std::to_string(static_cast<int>(h.kind)) + ", expected " +
                       std::to_string(static_cast<int>(want)));
}

void check_consumed(std::istream& is, const std::string& path) {
  is.peek();
  if (!is.eof()) throw format_error("'" + path + "': trailing bytes after payload");
}

template <typename Elem, typename Grid>
Grid read_grid3(const std::string& path, RasterKind want) {
  auto is = open_in(path);
  RasterHeader h = read_raster_header(is, path);
  expect_kind(h, want, path);
  if (h.t != 1) throw format_error("'" + path + "': 3D raster with T != 1");
  Grid g(static_cast<int>(h.x), static_cast<int>(h.y), static_cast<int>(h.z));
  g.spacing = h.spacing;
  std::vector<Elem> buf(g.data.size());
  take_bytes(is, buf.data(), buf.size() * sizeof(Elem), "payload");
  for (std::size_t i = 0; i < buf.size(); ++i)
    g.data[i] = static_cast<typename decltype(g.data)::value_type>(buf[i]);
  check_consumed(is, path);
  return g;
}

template <typename Elem, typename Grid>
void write_grid3(const std::string& path, const Grid& g, RasterKind kind) {
  auto os = open_out(path);
  write_raster_header(os, kind, static_cast<std::uint32_t>(g.nx),
                      static_cast<std::uint32_t>(g.ny), static_cast<std::uint32_t>(g.nz),
                      1, g.spacing);
  std::vector<Elem> buf(g.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<Elem>(g.data[i]);
  put_bytes(os, buf.data(), buf.size() * sizeof(Elem));
  if (!os) throw io_error("failed writing '" + path + "'");
}

}  // namespace

void write_series(const std::string& path, const CtpVolume4D& vol) {
  vol.validate();
  auto os = open_out(path);
  write_raster_header(os, RasterKind::series4d, static_cast<std::uint32_t>(vol.nx),
                      static_cast<std::uint32_t>(vol.ny),
                      static_cast<std::uint32_t>(vol.nz),
                      static_cast<std::uint32_t>(vol.nt), vol.spacing);
  std::vector<float> buf(vol.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(vol.data[i]);
  put_bytes(os, buf.data(), buf.size() * sizeof(float));
  if (!os) throw io_error("failed writing '" + path + "'");
}

CtpVolume4D read_series(const std::string& path) {
  auto is = open_in(path);
  RasterHeader h = read_raster_header(is, path);
  expect_kind(h, RasterKind::series4d, path);
  CtpVolume4D vol(static_cast<int>(h.x), static_cast<int>(h.y), static_cast<int>(h.z),
                  static_cast<int>(h.t), h.spacing);
  std::vector<float> buf(vol.data.size());
  take_bytes(is, buf.data(), buf.size() * sizeof(float), "payload");
  for (std::size_t i = 0; i < buf.size(); ++i) vol.data[i] = buf[i];
  check_consumed(is, path);
  return vol;
}

void write_labels(const std::string& path, const LabelVolume& labels) {
  write_grid3<std::uint8_t>(path, labels, RasterKind::labels);
}
LabelVolume read_labels(const std::string& path) {
  return read_grid3<std::uint8_t, LabelVolume>(path, RasterKind::labels);
}

void write_mask(const std::string& path, const MaskVolume& mask) {
  write_grid3<std::uint8_t>(path, mask, RasterKind::mask);
}
MaskVolume read_mask(const std::string& path) {
  return read_grid3<std::uint8_t, MaskVolume>(path, RasterKind::mask);
}

void write_probabilities(const std::string& path, const ProbabilityVolume& prob) {
  write_grid3<double>(path, prob, RasterKind::probabilities);
}
ProbabilityVolume read_probabilities(const std::string& path) {
  return read_grid3<double, ProbabilityVolume>(path, RasterKind::probabilities);
}

RasterKind peek_raster_kind(const std::string& path) {
  auto is = open_in(path);
  return read_raster_header(is, path).kind;
}

void write_checkpoint(const std::string& path, const DgpModel& model,
                      const std::string& config_echo, std::uint64_t seed,
                      std::uint64_t iterations) {
  auto os = open_out(path);
  os.write("TDGPCKPT", 8);
  put<std::uint16_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(model.layer_count()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(model.input_dim()));
  for (const auto& l : model.layers)
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l.output_dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(model.layers.front().inducing_count()));
  put<std::uint8_t>(os, model.layers.front().kernel.ard ? 1 : 0);
  for (const auto& l : model.layers)
    put<std::uint8_t>(os, static_cast<std::uint8_t>(l.mean_fn));
  for (const auto& l : model.layers) put<double>(os, l.kernel.jitter);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(config_echo.size()));
  put_bytes(os, config_echo.data(), config_echo.size());
  put<std::uint64_t>(os, seed);
  put<std::uint64_t>(os, iterations);
  Eigen::VectorXd theta = model.pack_params();
  put_bytes(os, theta.data(), static_cast<std::size_t>(theta.size()) * sizeof(double));
  if (!os) throw io_error("failed writing '" + path + "'");
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
  auto is = open_in(path);
  char magic[8];
  take_bytes(is, magic, 8, "magic");
  if (std::memcmp(magic, "TDGPCKPT", 8) != 0)
    throw format_error("'" + path + "' is not a checkpoint (bad magic)");
  auto version = take<std::uint16_t>(is, "version");
  if (version != kCheckpointVersion)
    throw format_error("'" + path + "': unsupported checkpoint version " +
                       std::to_string(version));
  auto h = take<std::uint32_t>(is, "layer count");
  auto input_dim = take<std::uint32_t>(is, "input dim");
  if (h == 0 || h > 64 || input_dim == 0)
    throw format_error("'" + path + "': implausible architecture");
  std::vector<int> widths(h);
  for (auto& w : widths) w = static_cast<int>(take<std::uint32_t>(is, "width"));
  auto m = take<std::uint32_t>(is, "inducing count");
  bool ard = take<std::uint8_t>(is, "ard flag") != 0;
  std::vector<MeanFunction> mean_fns(h);
  for (auto& f : mean_fns)
    f = static_cast<MeanFunction>(take<std::uint8_t>(is, "mean fn"));
  std::vector<double> jitters(h);
  for (auto& j : jitters) j = take<double>(is, "jitter");

  auto echo_len = take<std::uint32_t>(is, "config echo length");
  std::string echo(echo_len, '\0');
  if (echo_len > 0) take_bytes(is, echo.data(), echo_len, "config echo");
  auto seed = take<std::uint64_t>(is, "seed");
  auto iterations = take<std::uint64_t>(is, "iterations");

  // rebuild parameter shells from the descriptor, then fill them
  LoadedCheckpoint out;
  out.config_echo = std::move(echo);
  out.seed = seed;
  out.iterations = iterations;
  int d_in = static_cast<int>(input_dim);
  for (std::uint32_t i = 0; i < h; ++i) {
    SvgpLayer layer;
    layer.mean_fn = mean_fns[i];
    layer.kernel = ArdRbfKernel::create(d_in, ard, jitters[i]);
    layer.inducing_inputs = Eigen::MatrixXd::Zero(m, d_in);
    layer.variational_mean = Eigen::MatrixXd::Zero(m, widths[i]);
    layer.variational_chol_raw.assign(static_cast<std::size_t>(widths[i]),
                                      Eigen::MatrixXd::Zero(m, m));
    out.model.layers.push_back(std::move(layer));
    d_in = widths[i];
  }
  Eigen::VectorXd theta(out.model.param_count());
  take_bytes(is, theta.data(), static_cast<std::size_t>(theta.size()) * sizeof(double),
             "parameters");
  out.model.unpack_params(theta);
  check_consumed(is, path);
  return out;
}

void write_matrix(const std::string& path, const VoxelMatrix& vm) {
  auto os = open_out(path);
  os.write("TDGPVMAT", 8);
  put<std::uint16_t>(os, kMatrixVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(vm.v()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(vm.t()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(vm.patients.size()));
  for (const auto& p : vm.patients) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.id.size()));
    put_bytes(os, p.id.data(), p.id.size());
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.offset));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.count));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.nx));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.ny));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.nz));
    put<double>(os, p.spacing.dx);
    put<double>(os, p.spacing.dy);
    put<double>(os, p.spacing.dz);
  }
  for (int r = 0; r < vm.v(); ++r)
    for (int c = 0; c < vm.t(); ++c) put<double>(os, vm.x(r, c));
  put_bytes(os, vm.y.data(), vm.y.size());
  for (const auto& k : vm.index_map) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(k.x));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(k.y));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(k.z));
  }
  if (!os) throw io_error("failed writing '" + path + "'");
}

VoxelMatrix read_matrix(const std::string& path) {
  auto is = open_in(path);
  char magic[8];
  take_bytes(is, magic, 8, "magic");
  if (std::memcmp(magic, "TDGPVMAT", 8) != 0)
    throw format_error("'" + path + "' is not a voxel-matrix archive (bad magic)");
  auto version = take<std::uint16_t>(is, "version");
  if (version != kMatrixVersion)
    throw format_error("'" + path + "': unsupported matrix version " +
                       std::to_string(version));
  auto v = take<std::uint32_t>(is, "V");
  auto t = take<std::uint32_t>(is, "T");
  auto p_count = take<std::uint32_t>(is, "patient count");

  VoxelMatrix vm;
  for (std::uint32_t p = 0; p < p_count; ++p) {
    PatientRange range;
    auto id_len = take<std::uint32_t>(is, "id length");
    range.id.resize(id_len);
    if (id_len > 0) take_bytes(is, range.id.data(), id_len, "id");
    range.offset = static_cast<int>(take<std::uint32_t>(is, "offset"));
    range.count = static_cast<int>(take<std::uint32_t>(is, "count"));
    range.nx = static_cast<int>(take<std::uint32_t>(is, "nx"));
    range.ny = static_cast<int>(take<std::uint32_t>(is, "ny"));
    range.nz = static_cast<int>(take<std::uint32_t>(is, "nz"));
    range.spacing.dx = take<double>(is, "dx");
    range.spacing.dy = take<double>(is, "dy");
    range.spacing.dz = take<double>(is, "dz");
    vm.patients.push_back(std::move(range));
  }
  vm.x.resize(v, t);
  for (std::uint32_t r = 0; r < v; ++r)
    for (std::uint32_t c = 0; c < t; ++c) vm.x(r, c) = take<double>(is, "payload");
  vm.y.resize(v);
  if (v > 0) take_bytes(is, vm.y.data(), v, "labels");
  vm.index_map.resize(v);
  int patient = 0;
  for (std::uint32_t r = 0; r < v; ++r) {
    while (patient + 1 < static_cast<int>(vm.patients.size()) &&
           static_cast<int>(r) >= vm.patients[static_cast<std::size_t>(patient + 1)].offset)
      ++patient;
    auto& k = vm.index_map[r];
    k.patient = patient;
    k.x = static_cast<int>(take<std::uint32_t>(is, "index x"));
    k.y = static_cast<int>(take<std::uint32_t>(is, "index y"));
    k.z = static_cast<int>(take<std::uint32_t>(is, "index z"));
  }
  check_consumed(is, path);
  return vm;
}

void write_index_sidecar(const std::string& path, const VoxelMatrix& vm) {
  auto os = open_out(path);
  os << "row,patient_id,x,y,z\n";
  for (std::size_t r = 0; r < vm.index_map.size(); ++r) {
    const auto& k = vm.index_map[r];
    os << r << "," << vm.patients[static_cast<std::size_t>(k.patient)].id << "," << k.x
       << "," << k.y << "," << k.z << "\n";
  }
  if (!os) throw io_error("failed writing '" + path + "'");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void TraceCsv::write(const std::string& path, const std::vector<TracePoint>& trace) {
  auto os = open_out(path);
  os << "iteration,ell,kl,elbo,lr\n";
  for (const auto& p : trace)
    os << p.iteration << "," << format_double(p.expected_log_lik) << ","
       << format_double(p.kl) << "," << format_double(p.elbo) << ","
       << format_double(p.lr) << "\n";
  if (!os) throw io_error("failed writing '" + path + "'");
}

}  // namespace tdgp
