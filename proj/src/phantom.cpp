#include "pvmix/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pvmix/errors.hpp"
#include "pvmix/rng.hpp"
#include "pvmix/special.hpp"

namespace pvmix {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double ellipse_q(const Ellipse& e, double x, double y) {
  double th = e.rot * kPi / 180.0;
  double dx = x - e.cx, dy = y - e.cy;
  double u = std::cos(th) * dx + std::sin(th) * dy;
  double v = -std::sin(th) * dx + std::cos(th) * dy;
  return (u / e.a) * (u / e.a) + (v / e.b) * (v / e.b);
}

std::array<double, 3> variant_pi(PhantomVariant v) {
  switch (v) {
    case PhantomVariant::A:
      return {0.991, 0.005, 0.004};
    case PhantomVariant::B:
      return {0.977, 0.019, 0.004};
    case PhantomVariant::C:
      return {0.96, 0.034, 0.006};
    case PhantomVariant::Null:
      return {1.0, 0.0, 0.0};
  }
  throw DataError("phantom: unknown variant");
}

// Paint the class map: head mask first, then each active class claims its
// exact pixel budget, nearest ellipse-distance pixels first.
void rasterize(PhantomSpec& s) {
  s.cls.assign(s.width * s.height, -1);
  s.n_brain = 0;
  for (std::size_t y = 0; y < s.height; ++y)
    for (std::size_t x = 0; x < s.width; ++x)
      if (ellipse_q(s.head, static_cast<double>(x), static_cast<double>(y)) <=
          1.0) {
        s.cls[y * s.width + x] = 0;
        ++s.n_brain;
      }

  for (int k = 1; k <= 2; ++k) {
    std::size_t target = static_cast<std::size_t>(
        std::lround(s.pi_true[static_cast<std::size_t>(k)] *
                    static_cast<double>(s.n_brain)));
    if (target == 0) continue;

    std::vector<std::pair<double, std::size_t>> cand;  // (distance, pixel)
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) {
        std::size_t idx = y * s.width + x;
        if (s.cls[idx] != 0) continue;  // out of brain or already claimed
        double best = HUGE_VAL;
        for (const Ellipse& e : s.regions)
          if (e.cls == k)
            best = std::min(best, ellipse_q(e, static_cast<double>(x),
                                            static_cast<double>(y)));
        if (best < HUGE_VAL) cand.emplace_back(best, idx);
      }
    if (cand.size() < target)
      throw DataError("phantom: not enough free pixels for class " +
                      std::to_string(k));
    std::nth_element(cand.begin(), cand.begin() + static_cast<long>(target),
                     cand.end());
    std::sort(cand.begin(), cand.begin() + static_cast<long>(target));
    for (std::size_t i = 0; i < target; ++i) s.cls[cand[i].second] = k;
  }
}

const char* variant_name(PhantomVariant v) {
  switch (v) {
    case PhantomVariant::A:
      return "a";
    case PhantomVariant::B:
      return "b";
    case PhantomVariant::C:
      return "c";
    case PhantomVariant::Null:
      return "null";
  }
  return "null";
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

PhantomSpec make_phantom(PhantomVariant v) {
  PhantomSpec s;
  s.variant = v;
  s.width = s.height = 128;
  s.head = {63.5, 63.5, 58.0, 48.0, 0.0, 0};
  s.regions = {
      {40.0, 42.0, 8.0, 6.0, 30.0, 1},
      {86.0, 78.0, 7.0, 5.0, -40.0, 1},
      {62.0, 96.0, 6.0, 5.0, 15.0, 2},
  };
  s.pi_true = variant_pi(v);
  rasterize(s);
  return s;
}

std::string geometry_text(const PhantomSpec& spec) {
  std::string out;
  out += "pvmix-geometry 1\n";
  out += std::string("variant ") + variant_name(spec.variant) + "\n";
  out += "grid " + std::to_string(spec.width) + " " +
         std::to_string(spec.height) + "\n";
  out += "pi " + fmt(spec.pi_true[0]) + " " + fmt(spec.pi_true[1]) + " " +
         fmt(spec.pi_true[2]) + "\n";
  auto line = [&](const char* key, const Ellipse& e) {
    out += key;
    if (e.cls > 0) out += " " + std::to_string(e.cls);
    out += " " + fmt(e.cx) + " " + fmt(e.cy) + " " + fmt(e.a) + " " + fmt(e.b) +
           " " + fmt(e.rot) + "\n";
  };
  line("head", spec.head);
  for (const Ellipse& e : spec.regions) line("region", e);
  return out;
}

PhantomSpec phantom_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  PhantomSpec s;
  bool saw_version = false;
  bool saw_head = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string::size_type h = line.find('#');
    if (h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& what) {
      throw DataError("geometry line " + std::to_string(lineno) + ": " + what);
    };
    if (key == "pvmix-geometry") {
      int ver = 0;
      if (!(ls >> ver) || ver != 1) fail("unsupported version");
      saw_version = true;
    } else if (key == "variant") {
      std::string v;
      if (!(ls >> v)) fail("missing variant");
      if (v == "a")
        s.variant = PhantomVariant::A;
      else if (v == "b")
        s.variant = PhantomVariant::B;
      else if (v == "c")
        s.variant = PhantomVariant::C;
      else if (v == "null")
        s.variant = PhantomVariant::Null;
      else
        fail("unknown variant '" + v + "'");
    } else if (key == "grid") {
      long w = 0, hh = 0;
      if (!(ls >> w >> hh) || w < 1 || hh < 1) fail("bad grid extents");
      s.width = static_cast<std::size_t>(w);
      s.height = static_cast<std::size_t>(hh);
    } else if (key == "pi") {
      if (!(ls >> s.pi_true[0] >> s.pi_true[1] >> s.pi_true[2]))
        fail("bad pi line");
    } else if (key == "head") {
      Ellipse e;
      if (!(ls >> e.cx >> e.cy >> e.a >> e.b >> e.rot)) fail("bad head line");
      if (e.a <= 0.0 || e.b <= 0.0) fail("head semi-axes must be positive");
      s.head = e;
      saw_head = true;
    } else if (key == "region") {
      Ellipse e;
      if (!(ls >> e.cls >> e.cx >> e.cy >> e.a >> e.b >> e.rot))
        fail("bad region line");
      if (e.cls != 1 && e.cls != 2) fail("region class must be 1 or 2");
      if (e.a <= 0.0 || e.b <= 0.0) fail("region semi-axes must be positive");
      s.regions.push_back(e);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!saw_version) throw DataError("geometry: missing version header");
  if (!saw_head) throw DataError("geometry: missing head line");
  double sum = s.pi_true[0] + s.pi_true[1] + s.pi_true[2];
  if (std::fabs(sum - 1.0) > 1e-9 || s.pi_true[0] <= 0.0 ||
      s.pi_true[1] < 0.0 || s.pi_true[2] < 0.0)
    throw DataError("geometry: pi must be a probability vector");
  rasterize(s);
  return s;
}

double psi_density(double p, double nu) {
  if (!(p > 0.0 && p < 1.0)) throw DataError("psi_density: p must be in (0,1)");
  // evaluate the quantile in the nearer tail; 1 - p rounds to 1 for tiny p
  double z = p <= 0.5 ? -normal_quantile(p) : normal_quantile(1.0 - p);
  return std::exp(nu * z - 0.5 * nu * nu);
}

double pairwise_overlap(double nu_k, double nu_l, double pi_k, double pi_l) {
  if (!(pi_k > 0.0 && pi_l > 0.0))
    throw DataError("pairwise_overlap: weights must be positive");
  if (nu_k == nu_l) return 1.0;
  if (nu_k > nu_l) {
    std::swap(nu_k, nu_l);
    std::swap(pi_k, pi_l);
  }
  // crossing point of pi_k phi(z; nu_k) and pi_l phi(z; nu_l), nu_l > nu_k
  double c = (std::log(pi_k / pi_l) + 0.5 * (nu_l * nu_l - nu_k * nu_k)) /
             (nu_l - nu_k);
  return normal_cdf(nu_k - c) + normal_cdf(c - nu_l);
}

ComplexityCalibration calibrate_nu(const std::array<double, 3>& pi_true,
                                   double omega) {
  if (!(omega > 0.0 && omega < 1.0))
    throw DataError("calibrate_nu: omega must be in (0,1)");
  if (!(pi_true[0] > 0.0 && pi_true[1] > 0.0 && pi_true[2] > 0.0))
    throw DataError("calibrate_nu: all class weights must be positive");

  auto solve = [&](double pik) {
    auto f = [&](double nu) {
      return pairwise_overlap(0.0, nu, pi_true[0], pik) - omega;
    };
    double lo = 1e-9, hi = 60.0;
    if (!(f(lo) > 0.0 && f(hi) < 0.0))
      throw NumericalError("calibrate_nu: no bracket for the overlap target");
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
      double mid = 0.5 * (lo + hi);
      (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };

  ComplexityCalibration cal;
  cal.omega = omega;
  cal.nu = {0.0, solve(pi_true[1]), solve(pi_true[2])};
  cal.omega01 = pairwise_overlap(0.0, cal.nu[1], pi_true[0], pi_true[1]);
  cal.omega02 = pairwise_overlap(0.0, cal.nu[2], pi_true[0], pi_true[2]);
  cal.omega12 = pairwise_overlap(cal.nu[1], cal.nu[2], pi_true[1], pi_true[2]);
  return cal;
}

SimulatedField simulate_field(const PhantomSpec& spec,
                              const ComplexityCalibration& calib,
                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> raw;
  std::vector<double> p;
  std::vector<int> truth;
  raw.reserve(2 * spec.n_brain);
  p.reserve(spec.n_brain);
  truth.reserve(spec.n_brain);
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) {
      int k = spec.cls[y * spec.width + x];
      if (k < 0) continue;
      double z = calib.nu[static_cast<std::size_t>(k)] + rng.normal();
      raw.push_back(static_cast<int>(x));
      raw.push_back(static_cast<int>(y));
      p.push_back(normal_cdf(-z));
      truth.push_back(k);
    }
  SimulatedField out{make_field(std::move(raw), {spec.width, spec.height},
                                std::move(p)),
                     std::move(truth)};
  return out;
}

}  // namespace pvmix
