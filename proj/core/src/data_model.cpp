#include "scsmiv/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "scsmiv/error.hpp"

namespace scsmiv {

TreatmentPath TreatmentPath::switching(int initial, double switch_time) {
  return TreatmentPath({{0.0, initial}, {switch_time, 1 - initial}});
}

int TreatmentPath::at(double t) const noexcept {
  auto it = std::upper_bound(changes_.begin(), changes_.end(), t,
                             [](double value, const TreatmentChange& c) { return value < c.time; });
  if (it == changes_.begin()) return changes_.empty() ? 0 : changes_.front().value;
  return std::prev(it)->value;
}

int TreatmentPath::before(double t) const noexcept {
  auto it = std::lower_bound(changes_.begin(), changes_.end(), t,
                             [](const TreatmentChange& c, double value) { return c.time < value; });
  if (it == changes_.begin()) return changes_.empty() ? 0 : changes_.front().value;
  return std::prev(it)->value;
}

int treatment_at(const TreatmentPath& path, double t) noexcept { return path.at(t); }
int treatment_before(const TreatmentPath& path, double t) noexcept { return path.before(t); }

namespace {

void check_record(const SubjectRecord& r, std::vector<ValidationIssue>& issues) {
  auto add = [&](ErrorCode code, std::string detail) { issues.push_back({code, r.id, std::move(detail)}); };

  if (!std::isfinite(r.time) || !std::isfinite(r.z)) {
    add(ErrorCode::NonFiniteValue, "time and z must be finite");
  } else if (r.time < 0.0) {
    add(ErrorCode::NegativeTime, "time " + std::to_string(r.time) + " < 0");
  }
  for (double l : r.covariates) {
    if (!std::isfinite(l)) {
      add(ErrorCode::NonFiniteValue, "covariates must be finite");
      break;
    }
  }

  const auto& ch = r.path.changes();
  if (ch.empty() || ch.front().time != 0.0) {
    add(ErrorCode::MissingInitialValue, "treatment path must start with a change at t = 0");
  }
  for (std::size_t j = 0; j < ch.size(); ++j) {
    if (ch[j].value != 0 && ch[j].value != 1) {
      add(ErrorCode::NonBinaryTreatment, "treatment value " + std::to_string(ch[j].value));
      return;
    }
    if (!std::isfinite(ch[j].time) || ch[j].time < 0.0) {
      add(ErrorCode::NegativeTime, "change time " + std::to_string(ch[j].time));
      return;
    }
    if (j == 0) continue;
    if (!(ch[j].time > ch[j - 1].time)) {
      add(ErrorCode::UnsortedChanges, "change times must be strictly increasing");
      return;
    }
    if (ch[j].value == ch[j - 1].value) {
      add(ErrorCode::ConsecutiveEqualValues, "consecutive changes repeat value " + std::to_string(ch[j].value));
      return;
    }
  }
}

}  // namespace

std::vector<SubjectRecord> validate_subjects(std::vector<SubjectRecord> records) {
  std::vector<ValidationIssue> issues;
  std::unordered_set<std::string> seen;
  seen.reserve(records.size());
  for (const auto& r : records) {
    if (!seen.insert(r.id).second) issues.push_back({ErrorCode::DuplicateId, r.id, "id appears more than once"});
    check_record(r, issues);
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));

  // Changes after the censored time are never observed.
  for (auto& r : records) {
    auto& ch = r.path.changes();
    ch.erase(std::upper_bound(ch.begin() + 1, ch.end(), r.time,
                              [](double t, const TreatmentChange& c) { return t < c.time; }),
             ch.end());
  }
  return records;
}

EventTable build_event_table(std::vector<SubjectRecord> records, std::optional<double> tau) {
  EventTable table;
  const std::size_t n = records.size();

  std::vector<double> event_times;
  double max_time = 0.0;
  for (const auto& r : records) {
    max_time = std::max(max_time, r.time);
    if (r.status) event_times.push_back(r.time);
  }
  if (event_times.empty()) throw Error(ErrorCode::NoEvents, "no subject has an observed event");
  std::sort(event_times.begin(), event_times.end());

  for (double t : event_times) {
    if (!table.times_.empty() && table.times_.back() == t) {
      ++table.counts_.back();
    } else {
      table.times_.push_back(t);
      table.counts_.push_back(1);
    }
  }

  table.tau_ = tau.value_or(max_time);
  if (table.tau_ < table.times_.back()) {
    throw Error(ErrorCode::HorizonTooShort, "tau " + std::to_string(table.tau_) + " precedes the last event at " +
                                                std::to_string(table.times_.back()));
  }

  const auto& times = table.times_;
  const std::size_t K = times.size();
  table.risk_end_.resize(n);
  table.event_index_.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    auto end = std::upper_bound(times.begin(), times.end(), r.time);
    table.risk_end_[i] = static_cast<std::size_t>(end - times.begin());
    if (r.status) table.event_index_[i] = static_cast<std::ptrdiff_t>(table.risk_end_[i]) - 1;
  }

  table.treat_at_.assign(n * K, 0);
  table.treat_before_.assign(n * K, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ch = records[i].path.changes();
    // Walk the grid and the change list together; D = 0 past the subject's time.
    std::size_t next = 0;
    int current = 0;
    for (std::size_t k = 0; k < table.risk_end_[i]; ++k) {
      const double t = times[k];
      while (next < ch.size() && ch[next].time < t) current = ch[next++].value;
      const int before = (next == 0 && !ch.empty()) ? ch.front().value : current;
      while (next < ch.size() && ch[next].time <= t) current = ch[next++].value;
      table.treat_at_[k * n + i] = static_cast<std::uint8_t>(current);
      table.treat_before_[k * n + i] = static_cast<std::uint8_t>(before);
    }
  }

  table.subjects_ = std::move(records);
  return table;
}

}  // namespace scsmiv
