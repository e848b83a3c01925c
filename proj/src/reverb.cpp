#include "orchestra/reverb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "text.hpp"

namespace orchestra {
namespace {

constexpr double kStateFloor = 1e-30;

Eigen::Index gate_samples(double sample_rate) {
  return static_cast<Eigen::Index>(std::lround(kEarlyGateSeconds * sample_rate));
}

void check_room_sizes(const std::array<double, kUnitsPerBank>& sizes, const char* what) {
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(sizes[i] > 0.0)) throw std::invalid_argument(std::string(what) + " room sizes must be positive");
    if (i > 0 && !(sizes[i] > sizes[i - 1]))
      throw std::invalid_argument(std::string(what) + " room sizes must be strictly increasing");
  }
  if (std::abs(sizes.back() - sizes.front() - 0.3) > 1e-9)
    throw std::invalid_argument(std::string(what) + " room sizes must span [base, base + 0.3]");
}

struct LineFit {
  double slope = 0.0;
  double residual = 0.0;
};

// Least-squares line through (i / fs, db[i]) for i in [first, last].
LineFit fit_line(const std::vector<double>& db, std::size_t first, std::size_t last,
                 double sample_rate) {
  const double n = static_cast<double>(last - first + 1);
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t i = first; i <= last; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    st += t;
    sy += db[i];
    stt += t * t;
    sty += t * db[i];
  }
  const double denom = n * stt - st * st;
  LineFit fit;
  if (denom <= 0.0) return fit;
  fit.slope = (n * sty - st * sy) / denom;
  const double intercept = (sy - fit.slope * st) / n;
  double ss = 0;
  for (std::size_t i = first; i <= last; ++i) {
    const double e = db[i] - (intercept + fit.slope * static_cast<double>(i) / sample_rate);
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

}  // namespace

void ReverbUnitParams::validate() const {
  if (!(room_size > 0.0)) throw std::invalid_argument("room_size must be positive");
  if (!(damping >= 0.0 && damping <= 1.0)) throw std::invalid_argument("damping must lie in [0, 1]");
  for (std::size_t i = 0; i < kLinesPerUnit; ++i) {
    if (delay_lengths[i] < 1) throw std::invalid_argument("delay lengths must be >= 1 sample");
    if (!(feedback_gains[i] > 0.0 && feedback_gains[i] < 1.0))
      throw std::invalid_argument("feedback gains must lie in (0, 1)");
    for (std::size_t j = 0; j < i; ++j)
      if (std::gcd(delay_lengths[i], delay_lengths[j]) != 1)
        throw std::invalid_argument("delay lengths must be mutually coprime");
  }
}

double calibrate_feedback(double delay_samples, double sample_rate, double target_rt60) {
  if (!(delay_samples >= 1.0)) throw std::invalid_argument("delay must be >= 1 sample");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (!(target_rt60 > 0.0)) throw std::invalid_argument("target RT60 must be positive");
  return std::pow(10.0, -3.0 * (delay_samples / sample_rate) / target_rt60);
}

ReverbUnitParams make_unit_params(double room_size, const std::array<double, kLinesPerUnit>& base_ms,
                                  double sample_rate, double target_rt60, double damping) {
  ReverbUnitParams p;
  p.room_size = room_size;
  p.damping = damping;
  for (std::size_t i = 0; i < kLinesPerUnit; ++i) {
    int d = std::max(1, static_cast<int>(std::lround(room_size * base_ms[i] * sample_rate / 1000.0)));
    auto coprime = [&](int v) {
      for (std::size_t j = 0; j < i; ++j)
        if (std::gcd(v, p.delay_lengths[j]) != 1) return false;
      return true;
    };
    while (!coprime(d)) ++d;
    p.delay_lengths[i] = d;
    p.feedback_gains[i] = calibrate_feedback(d, sample_rate, target_rt60);
  }
  p.validate();
  return p;
}

std::string_view to_string(RoomName name) {
  return name == RoomName::Factory ? "FACTORY" : "CHURCH";
}

RoomPreset RoomPreset::factory() {
  RoomPreset p;
  p.name = RoomName::Factory;
  p.target_rt60 = 1.2;
  p.early_room_sizes = {16.0, 16.1, 16.2, 16.3};
  p.late_room_sizes = p.early_room_sizes;
  return p;
}

RoomPreset RoomPreset::church() {
  RoomPreset p;
  p.name = RoomName::Church;
  p.target_rt60 = 7.0;
  p.early_room_sizes = {143.0, 143.1, 143.2, 143.3};
  p.late_room_sizes = p.early_room_sizes;
  return p;
}

std::array<ReverbUnitParams, kUnitsPerBank> RoomPreset::early_units(double sample_rate) const {
  std::array<ReverbUnitParams, kUnitsPerBank> units;
  for (std::size_t u = 0; u < kUnitsPerBank; ++u)
    units[u] = make_unit_params(early_room_sizes[u], kEarlyDelayMsPerUnit, sample_rate,
                                target_rt60, damping);
  return units;
}

std::array<ReverbUnitParams, kUnitsPerBank> RoomPreset::late_units(double sample_rate) const {
  std::array<ReverbUnitParams, kUnitsPerBank> units;
  for (std::size_t u = 0; u < kUnitsPerBank; ++u)
    units[u] = make_unit_params(late_room_sizes[u], kLateDelayMsPerUnit, sample_rate,
                                target_rt60, damping);
  return units;
}

void RoomPreset::validate() const {
  if (!(target_rt60 > 0.0)) throw std::invalid_argument("target_rt60 must be positive");
  if (!(damping >= 0.0 && damping <= 1.0)) throw std::invalid_argument("damping must lie in [0, 1]");
  check_room_sizes(early_room_sizes, "early");
  check_room_sizes(late_room_sizes, "late");
}

RoomPreset parse_preset(std::istream& in) {
  RoomPreset preset;
  bool have_name = false;
  bool have_rt = false;
  bool have_late = false;
  std::size_t last_line = 0;
  text::for_each_line(in, [&](const std::vector<std::string_view>& t, std::size_t line) {
    last_line = line;
    const auto key = t[0];
    auto sizes = [&](std::array<double, kUnitsPerBank>& dst) {
      if (t.size() != kUnitsPerBank + 1) text::fail(line, "expected four room sizes");
      for (std::size_t i = 0; i < kUnitsPerBank; ++i) dst[i] = text::need_double(t[i + 1], line);
    };
    if (key == "name") {
      if (t.size() != 2) text::fail(line, "name expects one value");
      if (t[1] == "factory" || t[1] == "FACTORY") {
        preset.name = RoomName::Factory;
      } else if (t[1] == "church" || t[1] == "CHURCH") {
        preset.name = RoomName::Church;
      } else {
        text::fail(line, "unknown room name '" + std::string(t[1]) + "'");
      }
      have_name = true;
    } else if (key == "target_rt60") {
      if (t.size() != 2) text::fail(line, "target_rt60 expects one value");
      preset.target_rt60 = text::need_double(t[1], line);
      have_rt = true;
    } else if (key == "early_room_sizes") {
      sizes(preset.early_room_sizes);
    } else if (key == "late_room_sizes") {
      sizes(preset.late_room_sizes);
      have_late = true;
    } else if (key == "damping") {
      if (t.size() != 2) text::fail(line, "damping expects one value");
      preset.damping = text::need_double(t[1], line);
    } else if (key == "early_spread") {
      if (t.size() != 2) text::fail(line, "early_spread expects one value");
      const double v = text::need_double(t[1], line);
      if (!(v >= 0.0 && v <= 100.0)) text::fail(line, "early_spread must lie in [0, 100]");
      preset.early_send_spread = SpreadParam(v);
    } else {
      text::fail(line, "unknown key '" + std::string(key) + "'");
    }
  });
  if (!have_name || !have_rt) text::fail(last_line, "preset needs 'name' and 'target_rt60'");
  if (!have_late) preset.late_room_sizes = preset.early_room_sizes;
  try {
    preset.validate();
  } catch (const std::invalid_argument& e) {
    text::fail(last_line, e.what());
  }
  return preset;
}

RoomPreset load_preset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open preset file " + path);
  return parse_preset(in);
}

std::string format_preset(const RoomPreset& p) {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "name " << (p.name == RoomName::Factory ? "factory" : "church") << "\n"
      << "target_rt60 " << p.target_rt60 << "\n"
      << "early_room_sizes";
  for (double s : p.early_room_sizes) out << ' ' << s;
  out << "\nlate_room_sizes";
  for (double s : p.late_room_sizes) out << ' ' << s;
  out << "\ndamping " << p.damping << "\nearly_spread " << p.early_send_spread.value() << "\n";
  return out.str();
}

// --- FdnUnit ---------------------------------------------------------------

FdnUnit::FdnUnit(const ReverbUnitParams& params) : params_(params) {
  params_.validate();
  for (std::size_t i = 0; i < kLinesPerUnit; ++i)
    lines_[i].assign(static_cast<std::size_t>(params_.delay_lengths[i]), 0.0);
}

void FdnUnit::reset() {
  for (auto& l : lines_) std::fill(l.begin(), l.end(), 0.0);
  heads_.fill(0);
  lowpass_.fill(0.0);
}

void FdnUnit::process(std::span<const double> input, std::span<double> left,
                      std::span<double> right) {
  const auto& g = params_.feedback_gains;
  const double damp = params_.damping;
  for (std::size_t n = 0; n < input.size(); ++n) {
    std::array<double, kLinesPerUnit> s;
    for (std::size_t i = 0; i < kLinesPerUnit; ++i) s[i] = lines_[i][heads_[i]];

    left[n] = 0.5 * (s[0] - s[1] + s[2] - s[3]);
    right[n] = 0.5 * (s[0] + s[1] - s[2] - s[3]);

    std::array<double, kLinesPerUnit> f;
    for (std::size_t i = 0; i < kLinesPerUnit; ++i) {
      lowpass_[i] = (1.0 - damp) * g[i] * s[i] + damp * lowpass_[i];
      f[i] = lowpass_[i];
    }
    // Normalized 4x4 Hadamard.
    const double v0 = 0.5 * (f[0] + f[1] + f[2] + f[3]);
    const double v1 = 0.5 * (f[0] - f[1] + f[2] - f[3]);
    const double v2 = 0.5 * (f[0] + f[1] - f[2] - f[3]);
    const double v3 = 0.5 * (f[0] - f[1] - f[2] + f[3]);
    const double x = 0.5 * input[n];
    const std::array<double, kLinesPerUnit> w{x + v0, x + v1, x + v2, x + v3};
    for (std::size_t i = 0; i < kLinesPerUnit; ++i) {
      lines_[i][heads_[i]] = std::abs(w[i]) < kStateFloor ? 0.0 : w[i];
      if (++heads_[i] == lines_[i].size()) heads_[i] = 0;
    }
  }
}

Eigen::MatrixXd unit_impulse_response(const ReverbUnitParams& params, Eigen::Index samples) {
  FdnUnit unit(params);
  std::vector<double> in(static_cast<std::size_t>(samples), 0.0);
  if (samples > 0) in[0] = 1.0;
  Eigen::MatrixXd ir(samples, 2);
  unit.process(in, std::span<double>(ir.col(0).data(), static_cast<std::size_t>(samples)),
               std::span<double>(ir.col(1).data(), static_cast<std::size_t>(samples)));
  return ir;
}

// --- Early reflections -------------------------------------------------------

EarlyReflectionSet::EarlyReflectionSet(const RoomPreset& preset, double sample_rate, int block_size)
    : preset_(preset) {
  preset_.validate();
  const Eigen::Index len = gate_samples(sample_rate);
  irs_.resize(len, kStreamsPerBank);
  const auto units = preset_.early_units(sample_rate);
  for (std::size_t u = 0; u < kUnitsPerBank; ++u)
    irs_.middleCols(static_cast<Eigen::Index>(2 * u), 2) = unit_impulse_response(units[u], len);
  for (Eigen::Index c = 0; c < irs_.cols(); ++c) {
    const double energy = irs_.col(c).squaredNorm();
    if (energy > 0.0) irs_.col(c) *= std::sqrt(1.0 / (kStreamsPerBank * energy));
  }
  kernel_ = std::make_shared<ConvolutionKernel>(irs_, block_size);
}

EarlyReflectionBanks::EarlyReflectionBanks(std::shared_ptr<const EarlyReflectionSet> set)
    : set_(std::move(set)) {}

std::size_t EarlyReflectionBanks::allocate(const std::string& source_id) {
  if (auto it = index_.find(source_id); it != index_.end()) return it->second;
  banks_.emplace_back(set_->kernel());
  index_.emplace(source_id, banks_.size() - 1);
  return banks_.size() - 1;
}

bool EarlyReflectionBanks::contains(const std::string& source_id) const {
  return index_.count(source_id) != 0;
}

std::size_t EarlyReflectionBanks::index_of(const std::string& source_id) const {
  auto it = index_.find(source_id);
  if (it == index_.end()) throw UnknownSource("no early bank for source '" + source_id + "'");
  return it->second;
}

void EarlyReflectionBanks::process(const std::string& source_id, const double* input,
                                   Eigen::Ref<Eigen::MatrixXd> out) {
  process(index_of(source_id), input, out);
}

void EarlyReflectionBanks::process(std::size_t bank, const double* input,
                                   Eigen::Ref<Eigen::MatrixXd> out) {
  banks_.at(bank).process(input, out);
}

void EarlyReflectionBanks::process_mix(std::size_t bank, const double* input,
                                       Eigen::Ref<Eigen::VectorXd> out) {
  banks_.at(bank).process_mix(input, out);
}

// --- Late field ----------------------------------------------------------------

LateField::LateField(const RoomPreset& preset, double sample_rate, int bus_count)
    : preset_(preset), bus_count_(bus_count) {
  preset_.validate();
  if (bus_count < 1) throw std::invalid_argument("bus count must be positive");
  const auto params = preset_.late_units(sample_rate);
  // Long enough to decay 100 dB.
  const auto len = static_cast<Eigen::Index>(std::ceil(sample_rate * preset_.target_rt60 * 100.0 / 60.0));
  for (std::size_t u = 0; u < kUnitsPerBank; ++u) {
    units_.emplace_back(params[u]);
    const Eigen::MatrixXd ir = unit_impulse_response(params[u], len);
    for (int side = 0; side < 2; ++side)
      stream_scale_[2 * u + static_cast<std::size_t>(side)] = 1.0 / std::sqrt(ir.col(side).squaredNorm());
  }
}

void LateField::reset() {
  for (auto& u : units_) u.reset();
}

void LateField::process_streams(std::span<const double> input, Eigen::Ref<Eigen::MatrixXd> out) {
  const std::size_t n = input.size();
  for (std::size_t u = 0; u < kUnitsPerBank; ++u) {
    const auto c = static_cast<Eigen::Index>(2 * u);
    units_[u].process(input, std::span<double>(out.col(c).data(), n),
                      std::span<double>(out.col(c + 1).data(), n));
    out.col(c) *= stream_scale_[2 * u];
    out.col(c + 1) *= stream_scale_[2 * u + 1];
  }
}

void LateField::process(std::span<const double> input, Eigen::Ref<Eigen::MatrixXd> out) {
  const auto n = static_cast<Eigen::Index>(input.size());
  if (streams_.rows() != n) streams_.resize(n, kStreamsPerBank);
  process_streams(input, streams_);

  out.setZero();
  if (bus_count_ >= kStreamsPerBank) {
    for (int b = 0; b < bus_count_; ++b) out.col(b) = streams_.col(b % kStreamsPerBank);
  } else {
    // Fewer buses than streams: fold, keeping equal per-bus power.
    std::vector<int> count(static_cast<std::size_t>(bus_count_), 0);
    for (int s = 0; s < kStreamsPerBank; ++s) {
      out.col(s % bus_count_) += streams_.col(s);
      ++count[static_cast<std::size_t>(s % bus_count_)];
    }
    for (int b = 0; b < bus_count_; ++b) out.col(b) /= std::sqrt(static_cast<double>(count[static_cast<std::size_t>(b)]));
  }
}

// --- RT measurement ------------------------------------------------------------

std::vector<double> energy_decay_curve_db(std::span<const double> ir) {
  std::vector<double> edc(ir.size());
  long double acc = 0.0L;
  for (std::size_t i = ir.size(); i-- > 0;) {
    acc += static_cast<long double>(ir[i]) * ir[i];
    edc[i] = static_cast<double>(acc);
  }
  const double total = edc.empty() ? 0.0 : edc[0];
  for (auto& e : edc)
    e = (total > 0.0 && e > 0.0) ? 10.0 * std::log10(e / total)
                                 : -std::numeric_limits<double>::infinity();
  return edc;
}

RtEstimate measure_rt(std::span<const double> ir, double sample_rate, RtMethod method) {
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (static_cast<double>(ir.size()) < sample_rate)
    throw std::invalid_argument("impulse response must be at least 1 s long");
  const auto edc = energy_decay_curve_db(ir);
  if (!std::isfinite(edc[0])) throw InsufficientDecay("impulse response is silent");

  std::size_t first = 0, last = 0;
  if (method == RtMethod::SchroederT20) {
    while (first < edc.size() && edc[first] > -5.0) ++first;
    if (first == edc.size()) throw InsufficientDecay("decay curve never reaches -5 dB");
    last = first;
    while (last + 1 < edc.size() && edc[last + 1] >= -25.0) ++last;
    if (edc[last] > -15.0) throw InsufficientDecay("decay curve does not fall 10 dB below -5 dB");
  } else {
    first = static_cast<std::size_t>(std::lround(0.1 * sample_rate));
    last = static_cast<std::size_t>(std::lround(0.5 * sample_rate));
    if (!std::isfinite(edc[last])) throw InsufficientDecay("impulse response ends inside the fit window");
  }

  const LineFit fit = fit_line(edc, first, last, sample_rate);
  if (!(fit.slope < 0.0)) throw InsufficientDecay("decay curve does not fall in the fit window");
  return {-60.0 / fit.slope, method, fit.residual};
}

}  // namespace orchestra
