#include "support/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace scsmiv::testing {

SubjectRecord subject(std::string id, double time, bool status, double z, TreatmentPath path,
                      std::vector<double> covariates) {
  SubjectRecord r;
  r.id = std::move(id);
  r.time = time;
  r.status = status;
  r.z = z;
  r.path = std::move(path);
  r.covariates = std::move(covariates);
  return r;
}

namespace {

TreatmentPath random_path(std::mt19937_64& rng, int initial, double horizon, bool allow_switches) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TreatmentChange> changes{{0.0, initial}};
  if (!allow_switches) return TreatmentPath(changes);
  const int switches = static_cast<int>(rng() % 3);
  double t = 0.0;
  int value = initial;
  for (int s = 0; s < switches; ++s) {
    t += u(rng) * horizon / 2.0;
    value = 1 - value;
    changes.push_back({t, value});
  }
  return TreatmentPath(changes);
}

}  // namespace

std::vector<SubjectRecord> random_micro_dataset(std::mt19937_64& rng, const MicroOptions& opts) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const std::size_t n = 2 + rng() % (opts.max_subjects - 1);
    std::vector<SubjectRecord> out;
    std::size_t events = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double time = opts.integer_times ? static_cast<double>(1 + rng() % 3) : 0.1 + 2.9 * u(rng);
      bool status = u(rng) < 0.7 && events < opts.max_events;
      events += status ? 1 : 0;
      const double z = (i % 2 == 0) ? 1.0 : 0.0;
      const int initial = u(rng) < 0.75 ? static_cast<int>(z) : 1 - static_cast<int>(z);
      out.push_back(subject(std::to_string(i), time, status, z, random_path(rng, initial, time, opts.allow_switches)));
    }
    if (events > 0) return validate_subjects(std::move(out));
  }
}

std::vector<SubjectRecord> random_dataset(std::mt19937_64& rng, std::size_t n, double switch_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SubjectRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int z = u(rng) < 0.5 ? 1 : 0;
    // Follow-up ends at 2 so the risk set never thins out to a single arm.
    const double latent = -std::log1p(-u(rng)) / (0.3 + 0.2 * z);
    const double time = std::min(latent, 2.0);
    const bool status = latent < 2.0 && u(rng) < 0.8;
    TreatmentPath path = TreatmentPath::constant(z);
    if (u(rng) < switch_prob) {
      const double w = u(rng) * time;
      if (w > 0.0) path = TreatmentPath::switching(z, w);
    }
    out.push_back(subject("s" + std::to_string(i), time, status, z, path, {u(rng) - 0.5}));
  }
  return out;
}

}  // namespace scsmiv::testing
