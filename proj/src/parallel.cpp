#include "pvmix/parallel.hpp"

#include <thread>

#include "pvmix/density.hpp"
#include "pvmix/errors.hpp"
#include "pvmix/special.hpp"

namespace pvmix {

BlockPartition partition(std::size_t n, int D) {
  if (D < 1) throw DataError("partition: D must be >= 1");
  if (static_cast<std::size_t>(D) > n)
    throw DataError("partition: more blocks than records");
  BlockPartition bp;
  bp.D = D;
  bp.offsets.resize(D + 1);
  std::size_t base = n / D, rem = n % D, pos = 0;
  for (int d = 0; d < D; ++d) {
    bp.offsets[d] = pos;
    pos += base + (static_cast<std::size_t>(d) < rem ? 1 : 0);
  }
  bp.offsets[D] = pos;
  return bp;
}

void LocalStats::reset(int K_, int cv_) {
  K = K_;
  cv = cv_;
  sw.assign(K + 1, 0.0);
  swv.assign(static_cast<std::size_t>(K + 1) * cv, 0.0);
  swvv.assign(static_cast<std::size_t>(K + 1) * cv, 0.0);
  slnp.assign(K + 1, 0.0);
  sln1mp.assign(K + 1, 0.0);
}

double LocalStats::sbl(int k, double a, double b) const {
  return (a - 1.0) * slnp[k] + (b - 1.0) * sln1mp[k] - sw[k] * log_beta(a, b);
}

void accumulate_stats(const PValueField& f, const Responsibilities& r,
                      std::size_t lo, std::size_t hi, LocalStats& out) {
  const int K1 = r.K + 1, cv = f.cv;
  std::vector<Kahan> asw(K1), aslnp(K1), asln1mp(K1);
  std::vector<Kahan> aswv(static_cast<std::size_t>(K1) * cv);
  for (std::size_t i = lo; i < hi; ++i) {
    const double* v = f.coord_row(i);
    for (int k = 0; k < K1; ++k) {
      double w = r.W(i, k);
      asw[k].add(w);
      aslnp[k].add(w * f.logp[i]);
      asln1mp[k].add(w * f.log1mp[i]);
      for (int d = 0; d < cv; ++d) aswv[k * cv + d].add(w * v[d]);
    }
  }
  for (int k = 0; k < K1; ++k) {
    out.sw[k] = asw[k].value();
    out.slnp[k] = aslnp[k].value();
    out.sln1mp[k] = asln1mp[k].value();
    for (int d = 0; d < cv; ++d) out.swv[k * cv + d] = aswv[k * cv + d].value();
  }
}

void accumulate_sqdev(const PValueField& f, const Responsibilities& r,
                      std::size_t lo, std::size_t hi,
                      const std::vector<ComponentParams>& comps,
                      LocalStats& inout) {
  const int K1 = r.K + 1, cv = f.cv;
  std::vector<Kahan> acc(static_cast<std::size_t>(K1) * cv);
  for (std::size_t i = lo; i < hi; ++i) {
    const double* v = f.coord_row(i);
    for (int k = 0; k < K1; ++k) {
      double w = r.W(i, k);
      for (int d = 0; d < cv; ++d) {
        double dv = v[d] - comps[k].mu[d];
        acc[k * cv + d].add(w * dv * dv);
      }
    }
  }
  for (int k = 0; k < K1; ++k)
    for (int d = 0; d < cv; ++d) inout.swvv[k * cv + d] = acc[k * cv + d].value();
}

LocalStats gather_reduce(const std::vector<LocalStats>& parts) {
  if (parts.empty()) throw DataError("gather_reduce: no blocks");
  LocalStats total(parts[0].K, parts[0].cv);
  for (const LocalStats& s : parts) {
    if (s.K != total.K || s.cv != total.cv)
      throw DataError("gather_reduce: mismatched block shapes");
    for (std::size_t j = 0; j < total.sw.size(); ++j) {
      total.sw[j] += s.sw[j];
      total.slnp[j] += s.slnp[j];
      total.sln1mp[j] += s.sln1mp[j];
    }
    for (std::size_t j = 0; j < total.swv.size(); ++j) {
      total.swv[j] += s.swv[j];
      total.swvv[j] += s.swvv[j];
    }
  }
  return total;
}

void run_blocks(int D, const std::function<void(int)>& fn) {
  if (D == 1) {
    fn(0);
    return;
  }
  std::vector<std::exception_ptr> errs(D);
  auto wrapped = [&](int d) {
    try {
      fn(d);
    } catch (...) {
      errs[d] = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(D - 1);
  for (int d = 1; d < D; ++d) pool.emplace_back(wrapped, d);
  wrapped(0);
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace pvmix
