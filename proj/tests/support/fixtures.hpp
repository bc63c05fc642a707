#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "scsmiv/data_model.hpp"

namespace scsmiv::testing {

struct MicroOptions {
  std::size_t max_subjects = 5;
  std::size_t max_events = 3;
  bool allow_switches = true;
  bool integer_times = false;  // produces ties
};

/// Small random dataset with at least one event; paths may switch at arbitrary times.
std::vector<SubjectRecord> random_micro_dataset(std::mt19937_64& rng, const MicroOptions& opts = {});

/// Moderate random dataset (n subjects, binary z, one switch at most) for property tests.
std::vector<SubjectRecord> random_dataset(std::mt19937_64& rng, std::size_t n, double switch_prob = 0.3);

SubjectRecord subject(std::string id, double time, bool status, double z, TreatmentPath path = {},
                      std::vector<double> covariates = {});

}  // namespace scsmiv::testing
