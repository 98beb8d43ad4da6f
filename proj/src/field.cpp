#include "pvmix/field.hpp"

#include <cmath>

#include "pvmix/errors.hpp"

namespace pvmix {

void PValueField::finalize() {
  const std::size_t nn = p.size();
  if (cv != 2 && cv != 3) throw DataError("field: cv must be 2 or 3");
  if (dims.size() != static_cast<std::size_t>(cv))
    throw DataError("field: dims size does not match cv");
  if (raw.size() != nn * static_cast<std::size_t>(cv))
    throw DataError("field: coordinate/p size mismatch");
  for (std::size_t d = 0; d < dims.size(); ++d)
    if (dims[d] < 1) throw DataError("field: grid extent must be >= 1");

  clamped = 0;
  for (std::size_t i = 0; i < nn; ++i) {
    if (!std::isfinite(p[i])) throw DataError("field: non-finite p-value");
    if (p[i] < kPClamp) {
      p[i] = kPClamp;
      ++clamped;
    } else if (p[i] > 1.0 - kPClamp) {
      p[i] = 1.0 - kPClamp;
      ++clamped;
    }
  }

  coords.assign(nn * cv, 0.0);
  for (std::size_t i = 0; i < nn; ++i) {
    for (int d = 0; d < cv; ++d) {
      int r = raw[i * cv + d];
      if (r < 0 || static_cast<std::size_t>(r) >= dims[d])
        throw DataError("field: grid index out of range");
      // a single-cell axis maps to the midpoint
      coords[i * cv + d] =
          dims[d] > 1 ? static_cast<double>(r) / static_cast<double>(dims[d] - 1)
                      : 0.5;
    }
  }

  logp.resize(nn);
  log1mp.resize(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    logp[i] = std::log(p[i]);
    log1mp[i] = std::log1p(-p[i]);
  }
}

PValueField make_field(std::vector<int> raw, std::vector<std::size_t> dims,
                       std::vector<double> pvals) {
  PValueField f;
  f.cv = static_cast<int>(dims.size());
  f.dims = std::move(dims);
  f.raw = std::move(raw);
  f.p = std::move(pvals);
  f.finalize();
  return f;
}

MixtureParams MixtureParams::make(int K, int cv, double delta, double eta) {
  MixtureParams t;
  t.K = K;
  t.cv = cv;
  t.delta = delta;
  t.eta = eta;
  t.pi.assign(K + 1, 0.0);
  if (K == 0) {
    t.pi[0] = 1.0;
  } else {
    t.pi[0] = delta;
    double rest = (1.0 - delta) / K;
    for (int k = 1; k <= K; ++k) t.pi[k] = rest;
  }
  t.comp.assign(K + 1, ComponentParams{});
  for (int k = 1; k <= K; ++k) {
    t.comp[k].alpha = 0.5;
    t.comp[k].beta = 0.5 * (1.0 - eta) / eta;  // mean exactly eta
  }
  return t;
}

void MixtureParams::check() const {
  if (static_cast<int>(pi.size()) != K + 1 ||
      static_cast<int>(comp.size()) != K + 1)
    throw NumericalError("mixture: size mismatch");
  double s = 0.0;
  for (double w : pi) {
    if (!std::isfinite(w) || w < 0.0) throw NumericalError("mixture: bad weight");
    s += w;
  }
  if (std::fabs(s - 1.0) > 1e-9) throw NumericalError("mixture: weights do not sum to 1");
  if (pi[0] < delta - 1e-12) throw NumericalError("mixture: null weight below floor");
  if (comp[0].alpha != 1.0 || comp[0].beta != 1.0)
    throw NumericalError("mixture: component 0 must stay uniform");
  for (int k = 1; k <= K; ++k) {
    double a = comp[k].alpha, b = comp[k].beta;
    if (!(a > 0.0) || !(b > 0.0) || !(a < 1.0) || !(b > 1.0))
      throw NumericalError("mixture: shape constraint violated");
    if (a / (a + b) > eta + 1e-12)
      throw NumericalError("mixture: component mean above eta");
  }
  for (int k = 0; k <= K; ++k)
    for (int d = 0; d < cv; ++d)
      if (!(comp[k].sigma2[d] >= kSigma2Min - 1e-18))
        throw NumericalError("mixture: variance below floor");
}

}  // namespace pvmix
