#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <stdexcept>
#include <type_traits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sfm/data_harness.hpp"
#include "sfm/errors.hpp"
#include "sfm/model_gmm.hpp"
#include "sfm/model_hmm.hpp"
#include "sfm/task.hpp"

namespace sfm {

// ---------------------------------------------------------------------------
// Model file
//
// Integers are unsigned little-endian, reals are IEEE-754 binary64
// little-endian, strings are a u64 byte count followed by the bytes.
//
//   char[8]  "SFMMODEL"
//   u32      format version (1)
//   u32      backend: 0 = gmm, 1 = hmm
//   u64      feature dimension
//   str      positive class name, str negative class name
//   f64 C, f64 delta, u8 c_adapted, u8 converged
//   f64[dim] u0, f64[dim] u
//   gmm:  u64 K, f64 variance_floor_scale, f64 posterior_floor,
//         u64 n, f64[n] standardization mean, f64[n] scale   (n = 0: none)
//         then for theta+ and theta-: u64 K, u64 d, f64[K] weights,
//         f64[K*d] means, f64[K*d] variances, f64[d] variance floor
//   hmm:  u64 M, u64 K_out, f64 prob_floor, u64 min_length, str alphabet,
//         then for theta+ and theta-: u64 M, u64 K_out, f64[M] pi0,
//         f64[M*M] A, f64[M*K_out] B
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 8> kModelMagic = {'S', 'F', 'M', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

enum class BackendKind : std::uint32_t { gmm = 0, hmm = 1 };

/// Everything needed to score raw inputs besides the trained task.
struct ModelMeta {
  std::string positive_name;
  std::string negative_name;
  Standardizer standardizer;
  std::string alphabet;
};

template <class Backend>
struct SavedModel {
  ModelMeta meta;
  TrainedTask<Backend> task;
};

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void reals(const Vector& v) {
    for (double x : v) f64(x);
  }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw ParseError(0, "model file is truncated");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint64_t count(std::uint64_t limit = std::uint64_t{1} << 28) {
    const auto n = u64();
    if (n > limit) throw ParseError(0, "model file has an implausible size field");
    return n;
  }
  Vector reals(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 28)) throw ParseError(0, "model file has an implausible size field");
    Vector v(n);
    for (double& x : v) x = f64();
    return v;
  }
  std::string str() {
    const auto n = count(1 << 20);
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::uint64_t>(in_.gcount()) != n) throw ParseError(0, "model file is truncated");
    return s;
  }

 private:
  std::istream& in_;
};

inline void write_params(ByteWriter& w, const gmm::GmmParams& p) {
  w.u64(p.K);
  w.u64(p.d);
  w.reals(p.weights);
  w.reals(p.means);
  w.reals(p.variances);
  w.reals(p.variance_floor);
}

inline void write_params(ByteWriter& w, const hmm::HmmParams& p) {
  w.u64(p.M);
  w.u64(p.K_out);
  w.reals(p.pi0);
  w.reals(p.A);
  w.reals(p.B);
}

inline gmm::GmmParams read_gmm_params(ByteReader& r) {
  gmm::GmmParams p;
  p.K = r.count(1 << 16);
  p.d = r.count(1 << 20);
  p.weights = r.reals(p.K);
  p.means = r.reals(p.K * p.d);
  p.variances = r.reals(p.K * p.d);
  p.variance_floor = r.reals(p.d);
  return p;
}

inline hmm::HmmParams read_hmm_params(ByteReader& r) {
  hmm::HmmParams p;
  p.M = r.count(1 << 12);
  p.K_out = r.count(1 << 12);
  p.pi0 = r.reals(p.M);
  p.A = r.reals(p.M * p.M);
  p.B = r.reals(p.M * p.K_out);
  return p;
}

}  // namespace detail

template <class Backend>
constexpr BackendKind backend_kind() {
  if constexpr (std::is_same_v<Backend, gmm::GmmBackend>) {
    return BackendKind::gmm;
  } else {
    static_assert(std::is_same_v<Backend, hmm::HmmBackend>, "unsupported backend");
    return BackendKind::hmm;
  }
}

template <class Backend>
void write_model(std::ostream& out, const SavedModel<Backend>& model) {
  const auto& t = model.task;
  if (t.u.size() != t.u0.size()) throw InvalidArgument("write_model: u and u0 differ in length");
  detail::ByteWriter w(out);
  out.write(kModelMagic.data(), kModelMagic.size());
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(backend_kind<Backend>()));
  w.u64(t.u.size());
  w.str(model.meta.positive_name);
  w.str(model.meta.negative_name);
  w.f64(t.C);
  w.f64(t.delta);
  w.u8(t.c_adapted ? 1 : 0);
  w.u8(t.converged ? 1 : 0);
  w.reals(t.u0);
  w.reals(t.u);
  if constexpr (backend_kind<Backend>() == BackendKind::gmm) {
    const auto& c = t.backend.config();
    w.u64(c.K);
    w.f64(c.variance_floor_scale);
    w.f64(c.posterior_floor);
    w.u64(model.meta.standardizer.mean.size());
    w.reals(model.meta.standardizer.mean);
    w.reals(model.meta.standardizer.scale);
  } else {
    const auto& c = t.backend.config();
    w.u64(c.M);
    w.u64(c.K_out);
    w.f64(c.prob_floor);
    w.u64(c.min_length);
    w.str(model.meta.alphabet);
  }
  detail::write_params(w, t.models.plus);
  detail::write_params(w, t.models.minus);
  if (!out) throw std::runtime_error("write_model: write failed");
}

/// Backend recorded in a model stream; leaves the stream at its start.
inline BackendKind peek_backend(std::istream& in) {
  const auto start = in.tellg();
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 8 || magic != kModelMagic) throw ParseError(0, "not a model file (bad magic)");
  detail::ByteReader r(in);
  const auto version = r.u32();
  if (version != kModelVersion) throw ParseError(0, "unsupported model format version " + std::to_string(version));
  const auto kind = r.u32();
  if (kind > 1) throw ParseError(0, "unknown backend kind " + std::to_string(kind));
  in.seekg(start);
  return static_cast<BackendKind>(kind);
}

template <class Backend>
SavedModel<Backend> read_model(std::istream& in) {
  if (peek_backend(in) != backend_kind<Backend>()) throw ParseError(0, "model file holds a different backend");
  in.ignore(8 + 4 + 4);
  detail::ByteReader r(in);
  const auto dim = r.count();
  ModelMeta meta;
  meta.positive_name = r.str();
  meta.negative_name = r.str();
  const double C = r.f64();
  const double delta = r.f64();
  const bool c_adapted = r.u8() != 0;
  const bool converged = r.u8() != 0;
  Vector u0 = r.reals(dim);
  Vector u = r.reals(dim);
  auto build = [&](Backend backend) {
    TrainedTask<Backend> t{std::move(backend), {}, std::move(u0), std::move(u), C, delta, c_adapted, converged, {}, 0};
    return t;
  };
  if constexpr (backend_kind<Backend>() == BackendKind::gmm) {
    gmm::GmmConfig c;
    c.K = r.count(1 << 16);
    c.variance_floor_scale = r.f64();
    c.posterior_floor = r.f64();
    const auto n = r.count(1 << 20);
    meta.standardizer.mean = r.reals(n);
    meta.standardizer.scale = r.reals(n);
    auto t = build(gmm::GmmBackend(c));
    t.models.plus = detail::read_gmm_params(r);
    t.models.minus = detail::read_gmm_params(r);
    if (2 * t.backend.block_dim(t.models.plus) + 1 != dim) throw ParseError(0, "model file dimensions disagree");
    return {std::move(meta), std::move(t)};
  } else {
    hmm::HmmConfig c;
    c.M = r.count(1 << 12);
    c.K_out = r.count(1 << 12);
    c.prob_floor = r.f64();
    c.min_length = r.count();
    meta.alphabet = r.str();
    auto t = build(hmm::HmmBackend(c));
    t.models.plus = detail::read_hmm_params(r);
    t.models.minus = detail::read_hmm_params(r);
    if (2 * t.backend.block_dim(t.models.plus) + 1 != dim) throw ParseError(0, "model file dimensions disagree");
    return {std::move(meta), std::move(t)};
  }
}

template <class Backend>
void save_model(const std::string& path, const SavedModel<Backend>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file '" + path + "'");
  write_model(out, model);
}

inline std::ifstream open_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open model file '" + path + "'");
  return in;
}

// ---------------------------------------------------------------------------
// CSV rows. Reals use %.17g so that parsing gives back the same double;
// NaN and infinities are written as nan, inf and -inf.
// ---------------------------------------------------------------------------

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_real(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError(0, "bad number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_count(std::string_view s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError(0, "bad count '" + std::string(s) + "'");
  return v;
}

/// Quotes a cell when it holds a comma, quote or line break.
inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  if (quoted) throw ParseError(0, "unterminated quoted cell");
  return cells;
}

struct TelemetryRow {
  std::size_t iteration = 0;
  double J = 0.0;
  double R_S = 0.0;
  double e_S = 0.0;
  double d_S = 0.0;
  /// Semi-supervised bound, unclamped.
  double bound = 0.0;
  double acceptance_rate = 0.0;
  double C = 0.0;
  double d_Su = 0.0;
  double kl_total = 0.0;
  double bound_supervised = 0.0;
  std::size_t degraded = 0;

  bool operator==(const TelemetryRow& o) const {
    auto same = [](double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b) ||
                                                (std::isnan(a) && std::isnan(b)); };
    return iteration == o.iteration && same(J, o.J) && same(R_S, o.R_S) && same(e_S, o.e_S) && same(d_S, o.d_S) &&
           same(bound, o.bound) && same(acceptance_rate, o.acceptance_rate) && same(C, o.C) && same(d_Su, o.d_Su) &&
           same(kl_total, o.kl_total) && same(bound_supervised, o.bound_supervised) && degraded == o.degraded;
  }
};

inline constexpr std::string_view kTelemetryHeader =
    "iteration,J,R_S,e_S,d_S,bound,acceptance_rate,C,d_Su,kl_total,bound_supervised,degraded";

inline TelemetryRow telemetry_row(const IterationRecord& rec) {
  const auto& r = rec.risks;
  return {rec.iteration, r.J, r.R_S, r.e_S, r.d_S, r.bound_semisupervised, rec.acceptance_rate, rec.C,
          r.d_Su, r.kl_total, r.bound_supervised, rec.degraded};
}

inline void write_telemetry(std::ostream& out, const std::vector<TelemetryRow>& rows) {
  out << kTelemetryHeader << "\n";
  for (const auto& t : rows) {
    out << t.iteration << ',' << format_real(t.J) << ',' << format_real(t.R_S) << ',' << format_real(t.e_S) << ','
        << format_real(t.d_S) << ',' << format_real(t.bound) << ',' << format_real(t.acceptance_rate) << ','
        << format_real(t.C) << ',' << format_real(t.d_Su) << ',' << format_real(t.kl_total) << ','
        << format_real(t.bound_supervised) << ',' << t.degraded << "\n";
  }
}

inline std::vector<TelemetryRow> read_telemetry(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTelemetryHeader) throw ParseError(1, "missing telemetry header");
  std::vector<TelemetryRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 12) throw ParseError(line_no, "expected 12 telemetry cells");
    try {
      rows.push_back({parse_count(c[0]), parse_real(c[1]), parse_real(c[2]), parse_real(c[3]), parse_real(c[4]),
                      parse_real(c[5]), parse_real(c[6]), parse_real(c[7]), parse_real(c[8]), parse_real(c[9]),
                      parse_real(c[10]), parse_count(c[11])});
    } catch (const ParseError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return rows;
}

struct ResultRow {
  std::string task;
  std::size_t partition = 0;
  std::string mode;
  std::size_t n_labeled = 0;
  double accuracy = 0.0;
  double bound_raw = 0.0;
  double bound_clamped = 0.0;
  double wall_seconds = 0.0;

  bool operator==(const ResultRow&) const = default;
};

inline constexpr std::string_view kResultsHeader =
    "task,partition,mode,n_labeled,accuracy,bound_raw,bound_clamped,wall_seconds";

inline void write_result_row(std::ostream& out, const ResultRow& r) {
  out << csv_cell(r.task) << ',' << r.partition << ',' << csv_cell(r.mode) << ',' << r.n_labeled << ','
      << format_real(r.accuracy) << ',' << format_real(r.bound_raw) << ',' << format_real(r.bound_clamped) << ','
      << format_real(r.wall_seconds) << "\n";
}

inline void write_results(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultsHeader << "\n";
  for (const auto& r : rows) write_result_row(out, r);
}

inline std::vector<ResultRow> read_results(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) throw ParseError(1, "missing results header");
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 8) throw ParseError(line_no, "expected 8 result cells");
    try {
      rows.push_back({c[0], parse_count(c[1]), c[2], parse_count(c[3]), parse_real(c[4]), parse_real(c[5]),
                      parse_real(c[6]), parse_real(c[7])});
    } catch (const ParseError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return rows;
}

}  // namespace sfm
