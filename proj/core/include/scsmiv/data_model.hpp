#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scsmiv {

struct TreatmentChange {
  double time = 0.0;
  int value = 0;

  friend bool operator==(const TreatmentChange&, const TreatmentChange&) = default;
};

/// Right-continuous 0/1 step function t -> D(t). The first change carries the
/// value at t = 0; later changes are strictly increasing in time and alternate
/// in value. Well-formedness is checked by validate_subjects, not here.
class TreatmentPath {
 public:
  TreatmentPath() : changes_{{0.0, 0}} {}
  explicit TreatmentPath(std::vector<TreatmentChange> changes) : changes_(std::move(changes)) {}

  static TreatmentPath constant(int value) { return TreatmentPath({{0.0, value}}); }
  /// Starts at `initial` and flips to 1 - initial at `switch_time`.
  static TreatmentPath switching(int initial, double switch_time);

  const std::vector<TreatmentChange>& changes() const noexcept { return changes_; }
  std::vector<TreatmentChange>& changes() noexcept { return changes_; }

  /// D(t): value of the last change at or before t.
  int at(double t) const noexcept;
  /// D(t-): value of the last change strictly before t; D(0-) is the initial value.
  int before(double t) const noexcept;

  std::size_t switch_count() const noexcept { return changes_.empty() ? 0 : changes_.size() - 1; }

  friend bool operator==(const TreatmentPath&, const TreatmentPath&) = default;

 private:
  std::vector<TreatmentChange> changes_;
};

int treatment_at(const TreatmentPath& path, double t) noexcept;
int treatment_before(const TreatmentPath& path, double t) noexcept;

struct SubjectRecord {
  std::string id;
  double time = 0.0;  // T = min(event, censoring)
  bool status = false;
  double z = 0.0;
  std::vector<double> covariates;
  TreatmentPath path;

  /// D(t) with the convention D(t) = 0 for t > time.
  int treatment_at(double t) const noexcept { return t > time ? 0 : path.at(t); }
  int treatment_before(double t) const noexcept { return t > time ? 0 : path.before(t); }

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

/// Checks every record and returns them with paths trimmed to [0, time].
/// Throws ValidationError listing every offending subject.
std::vector<SubjectRecord> validate_subjects(std::vector<SubjectRecord> records);

/// Pooled grid of distinct event times with the at-risk and treatment state of
/// every subject cached at every grid point. Immutable after construction.
class EventTable {
 public:
  std::size_t subject_count() const noexcept { return subjects_.size(); }
  std::size_t time_count() const noexcept { return times_.size(); }

  const std::vector<SubjectRecord>& subjects() const noexcept { return subjects_; }
  std::span<const double> event_times() const noexcept { return times_; }
  /// Number of events tied at each grid time.
  std::span<const int> event_counts() const noexcept { return counts_; }
  double tau() const noexcept { return tau_; }

  /// Y_i(t_k) = 1 iff k < risk_end(i).
  std::size_t risk_end(std::size_t i) const noexcept { return risk_end_[i]; }
  bool at_risk(std::size_t i, std::size_t k) const noexcept { return k < risk_end_[i]; }
  /// Grid index of subject i's event, or -1 when censored.
  std::ptrdiff_t event_index(std::size_t i) const noexcept { return event_index_[i]; }
  bool has_event(std::size_t i, std::size_t k) const noexcept {
    return event_index_[i] == static_cast<std::ptrdiff_t>(k);
  }

  /// D_i(t_k), zero beyond the subject's follow-up.
  bool treated(std::size_t i, std::size_t k) const noexcept { return treat_at_[k * subjects_.size() + i] != 0; }
  /// D_i(t_k-).
  bool treated_before(std::size_t i, std::size_t k) const noexcept {
    return treat_before_[k * subjects_.size() + i] != 0;
  }
  /// Row of D(t_k) over subjects.
  std::span<const std::uint8_t> treated_row(std::size_t k) const noexcept {
    return {treat_at_.data() + k * subjects_.size(), subjects_.size()};
  }

 private:
  friend EventTable build_event_table(std::vector<SubjectRecord> records, std::optional<double> tau);

  std::vector<SubjectRecord> subjects_;
  std::vector<double> times_;
  std::vector<int> counts_;
  double tau_ = 0.0;
  std::vector<std::size_t> risk_end_;
  std::vector<std::ptrdiff_t> event_index_;
  std::vector<std::uint8_t> treat_at_;      // k-major, n per row
  std::vector<std::uint8_t> treat_before_;  // k-major, n per row
};

/// Builds the event grid. `tau` defaults to the largest observed time and must
/// not precede the last event. Throws NoEvents when every subject is censored.
EventTable build_event_table(std::vector<SubjectRecord> records, std::optional<double> tau = std::nullopt);

}  // namespace scsmiv
