#include <algorithm>

#include "binary_io.hpp"
#include "gtno/errors.hpp"
#include "gtno/pde_data.hpp"

namespace gtno {

namespace {

using detail::Reader;
using detail::Writer;

enum : std::uint8_t { kPositionsNone = 0, kPositionsShared = 1, kPositionsPerSample = 2 };

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

PointSet read_points(Reader& r, std::size_t L, const std::vector<AxisBounds>& bounds) {
  std::vector<double> pos = r.f64s(L * bounds.size());
  try {
    return PointSet(Tensor::from({L, bounds.size()}, std::move(pos)), bounds);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid positions: ") + e.what());
  }
}

}  // namespace

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::darcy: return "darcy";
    case DatasetKind::swe: return "swe";
    case DatasetKind::diffreact: return "diffreact";
    case DatasetKind::external: return "external";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "darcy") return DatasetKind::darcy;
  if (s == "swe" || s == "shallow-water") return DatasetKind::swe;
  if (s == "diffreact" || s == "diffusion-reaction") return DatasetKind::diffreact;
  if (s == "external") return DatasetKind::external;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

std::optional<double> DatasetHeader::param(const std::string& name) const {
  for (const auto& [k, v] : params)
    if (k == name) return v;
  return std::nullopt;
}

const PointSet& Dataset::points(std::size_t i) const {
  if (samples.at(i).points) return *samples[i].points;
  if (!shared_points) throw ConfigError("dataset has no positions for sample " + std::to_string(i));
  return *shared_points;
}

std::vector<char> dataset_bytes(const Dataset& d) {
  const DatasetHeader& h = d.header;
  const std::size_t L = h.points, dims = h.bounds.size();
  Writer w;
  w.header(detail::kKindDataset);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(h.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.samples.size()));
  w.put<std::uint32_t>(h.points);
  w.put<std::uint32_t>(h.nx);
  w.put<std::uint32_t>(h.ny);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(dims));
  w.put<std::uint32_t>(h.in_channels);
  w.put<std::uint32_t>(h.out_channels);
  w.put<std::uint32_t>(h.t_in);
  w.put<std::uint32_t>(h.t_out);
  for (const AxisBounds& b : h.bounds) {
    w.put<double>(b.lo);
    w.put<double>(b.hi);
  }
  w.put<std::uint16_t>(static_cast<std::uint16_t>(h.params.size()));
  for (const auto& [name, v] : h.params) {
    w.str16(name);
    w.put<double>(v);
  }
  w.put<std::uint64_t>(h.seed);

  const bool per_sample = std::any_of(d.samples.begin(), d.samples.end(), [](const Sample& s) { return s.points.has_value(); });
  const std::uint8_t mode = per_sample ? kPositionsPerSample : d.shared_points ? kPositionsShared : kPositionsNone;
  if (mode == kPositionsNone && !d.samples.empty()) throw ConfigError("dataset samples have no positions");
  w.put<std::uint8_t>(mode);

  auto check_points = [&](const PointSet& p) {
    if (p.size() != L || p.dims() != dims || p.bounds() != h.bounds) {
      throw ShapeError("sample positions disagree with the dataset header");
    }
    w.f64s(values(p.positions()));
  };
  if (mode == kPositionsShared) check_points(*d.shared_points);
  for (const Sample& s : d.samples) {
    if (mode == kPositionsPerSample) {
      if (!s.points) throw ConfigError("mixed shared and per-sample positions");
      check_points(*s.points);
    }
    if (s.theta.numel() != L * h.in_channels) throw ShapeError("sample theta has the wrong size");
    w.f64s(values(s.theta));
    if (s.target.size() != h.frames()) throw ShapeError("sample has the wrong number of target frames");
    for (const Tensor& t : s.target) {
      if (t.numel() != L * h.out_channels) throw ShapeError("sample target has the wrong size");
      w.f64s(values(t));
    }
  }
  return w.buffer();
}

void write_dataset(const std::string& path, const Dataset& d) {
  const auto bytes = dataset_bytes(d);
  Writer w;
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

Dataset read_dataset(const std::string& path) {
  Reader r = Reader::open(path);
  r.header(detail::kKindDataset, "dataset");
  Dataset d;
  DatasetHeader& h = d.header;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 3) throw FormatError("unknown dataset kind tag " + std::to_string(kind));
  h.kind = static_cast<DatasetKind>(kind);
  const auto n = r.get<std::uint32_t>();
  h.points = r.get<std::uint32_t>();
  h.nx = r.get<std::uint32_t>();
  h.ny = r.get<std::uint32_t>();
  const auto dims = r.get<std::uint8_t>();
  h.in_channels = r.get<std::uint32_t>();
  h.out_channels = r.get<std::uint32_t>();
  h.t_in = r.get<std::uint32_t>();
  h.t_out = r.get<std::uint32_t>();
  if (dims == 0 || h.points == 0 || h.in_channels == 0 || h.out_channels == 0) {
    throw FormatError("dataset header has zero extents");
  }
  for (std::uint8_t a = 0; a < dims; ++a) {
    AxisBounds b;
    b.lo = r.get<double>();
    b.hi = r.get<double>();
    h.bounds.push_back(b);
  }
  const auto np = r.get<std::uint16_t>();
  for (std::uint16_t i = 0; i < np; ++i) {
    std::string name = r.str16();
    h.params.emplace_back(std::move(name), r.get<double>());
  }
  h.seed = r.get<std::uint64_t>();

  const auto mode = r.get<std::uint8_t>();
  if (mode > kPositionsPerSample) throw FormatError("unknown positions mode");
  if (mode == kPositionsNone && n > 0) throw FormatError("dataset samples have no positions");
  const std::size_t L = h.points;
  if (mode == kPositionsShared) d.shared_points = read_points(r, L, h.bounds);
  d.samples.reserve(n);
  for (std::uint32_t s = 0; s < n; ++s) {
    Sample smp;
    if (mode == kPositionsPerSample) smp.points = read_points(r, L, h.bounds);
    smp.theta = Tensor::from({L, h.in_channels}, r.f64s(L * h.in_channels));
    for (std::size_t f = 0; f < h.frames(); ++f) {
      smp.target.push_back(Tensor::from({L, h.out_channels}, r.f64s(L * h.out_channels)));
    }
    d.samples.push_back(std::move(smp));
  }
  r.expect_end();
  return d;
}

Dataset load_external_pointcloud_dataset(const std::string& path) {
  Dataset d = read_dataset(path);
  if (d.header.kind != DatasetKind::external) throw FormatError("'" + path + "' is not an external point-cloud dataset");
  return d;
}

Dataset generate_dataset(const GenOptions& opt) {
  if (opt.nx < 2 || opt.ny < 2) throw ConfigError("grid must be at least 2x2");
  Dataset d;
  DatasetHeader& h = d.header;
  h.kind = opt.kind;
  h.nx = static_cast<std::uint32_t>(opt.nx);
  h.ny = static_cast<std::uint32_t>(opt.ny);
  h.points = static_cast<std::uint32_t>(opt.nx * opt.ny);
  h.seed = opt.seed;
  const std::size_t L = opt.nx * opt.ny;

  switch (opt.kind) {
    case DatasetKind::darcy: {
      const DarcyParams& p = opt.darcy;
      h.bounds = {{0.0, 1.0}, {0.0, 1.0}};
      h.params = {{"beta", p.beta}, {"a_low", p.a_low},   {"a_high", p.a_high},
                  {"tau", p.tau},   {"alpha", p.alpha}, {"modes", static_cast<double>(p.modes)}};
      d.shared_points = uniform_grid(opt.nx, opt.ny, h.bounds[0], h.bounds[1]);
      for (std::size_t i = 0; i < opt.count; ++i) {
        auto a = gen_darcy_coefficient(opt.seed + i, opt.nx, opt.ny, p);
        auto u = solve_darcy(a, p.beta, opt.nx, opt.ny);
        Sample s;
        s.theta = Tensor::from({L, 1}, std::move(a));
        s.target.push_back(Tensor::from({L, 1}, std::move(u)));
        d.samples.push_back(std::move(s));
      }
      break;
    }
    case DatasetKind::diffreact:
    case DatasetKind::swe: {
      if (opt.t_in < 1 || opt.t_out < 1) throw ConfigError("time-dependent datasets need t_in, t_out >= 1");
      const bool dr = opt.kind == DatasetKind::diffreact;
      const std::size_t ch = dr ? 2 : 1;
      const double half = dr ? 1.0 : 2.5;
      h.bounds = {{-half, half}, {-half, half}};
      h.t_in = static_cast<std::uint32_t>(opt.t_in);
      h.t_out = static_cast<std::uint32_t>(opt.t_out);
      h.in_channels = static_cast<std::uint32_t>(ch * opt.t_in);
      h.out_channels = static_cast<std::uint32_t>(ch);
      if (dr) {
        const DiffReactParams& p = opt.diffreact;
        h.params = {{"du", p.du}, {"dv", p.dv}, {"k", p.k}, {"t_end", p.t_end}, {"reactions", p.reactions ? 1.0 : 0.0}};
      } else {
        const ShallowWaterParams& p = opt.swe;
        h.params = {{"g", p.g},           {"t_end", p.t_end},         {"radius_low", p.radius_low},
                    {"radius_high", p.radius_high}, {"h_inside", p.h_inside}, {"h_outside", p.h_outside}};
      }
      d.shared_points = cell_centered_grid(opt.nx, opt.ny, h.bounds[0], h.bounds[1]);
      const std::size_t frames = opt.t_in + opt.t_out;
      for (std::size_t i = 0; i < opt.count; ++i) {
        Trajectory tr = dr ? simulate_diffusion_reaction(opt.seed + i, opt.nx, opt.ny, frames, opt.diffreact)
                           : simulate_shallow_water(opt.seed + i, opt.nx, opt.ny, frames, opt.swe);
        Sample s;
        std::vector<double> theta(L * ch * opt.t_in);
        for (std::size_t t = 0; t < opt.t_in; ++t)
          for (std::size_t c = 0; c < L; ++c)
            for (std::size_t k = 0; k < ch; ++k) theta[c * ch * opt.t_in + t * ch + k] = tr.frames[t][c * ch + k];
        s.theta = Tensor::from({L, ch * opt.t_in}, std::move(theta));
        for (std::size_t t = 0; t < opt.t_out; ++t) s.target.push_back(Tensor::from({L, ch}, tr.frames[opt.t_in + t]));
        d.samples.push_back(std::move(s));
      }
      break;
    }
    case DatasetKind::external:
      throw ConfigError("external datasets are converted, not generated");
  }
  return d;
}

}  // namespace gtno
