#include <doctest.h>

#include <random>

#include "scsmiv/data_model.hpp"
#include "scsmiv/error.hpp"
#include "support/fixtures.hpp"

using namespace scsmiv;
using scsmiv::testing::subject;

namespace {

ErrorCode first_issue(std::vector<SubjectRecord> records) {
  try {
    validate_subjects(std::move(records));
  } catch (const ValidationError& e) {
    REQUIRE(!e.issues().empty());
    return e.issues().front().code;
  }
  FAIL("expected a ValidationError");
  return ErrorCode::Io;
}

int linear_scan(const TreatmentPath& p, double t) {
  int v = p.changes().front().value;
  for (const auto& c : p.changes()) {
    if (c.time <= t) v = c.value;
  }
  return v;
}

}  // namespace

TEST_CASE("treatment_at is right-continuous, treatment_before is the left limit") {
  const TreatmentPath p({{0.0, 1}, {3.0, 0}});
  CHECK(treatment_at(p, 3.0) == 0);
  CHECK(treatment_before(p, 3.0) == 1);
  CHECK(treatment_at(p, 2.999) == 1);
  CHECK(treatment_at(p, 0.0) == 1);
  CHECK(treatment_before(p, 0.0) == 1);
  CHECK(treatment_at(TreatmentPath::constant(0), 100.0) == 0);
}

TEST_CASE("treatment_at agrees with a linear scan") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<TreatmentChange> ch{{0.0, static_cast<int>(rng() % 2)}};
    double t = 0.0;
    for (int s = 0; s < static_cast<int>(rng() % 5); ++s) {
      t += 0.01 + u(rng) / 5.0;
      ch.push_back({t, 1 - ch.back().value});
    }
    const TreatmentPath p(ch);
    for (int q = 0; q < 50; ++q) {
      const double at = q < 5 && q < static_cast<int>(ch.size()) ? ch[static_cast<std::size_t>(q)].time : u(rng);
      CHECK(treatment_at(p, at) == linear_scan(p, at));
    }
  }
}

TEST_CASE("subject records read D = 0 after their own time") {
  const auto r = subject("a", 2.0, true, 1, TreatmentPath::constant(1));
  CHECK(r.treatment_at(2.0) == 1);
  CHECK(r.treatment_at(2.5) == 0);
  CHECK(r.treatment_before(2.5) == 0);
}

TEST_CASE("validate_subjects accepts a minimal record") {
  const auto out = validate_subjects({subject("1", 5.0, true, 1, TreatmentPath::constant(1))});
  REQUIRE(out.size() == 1);
  CHECK(out[0].path.changes().size() == 1);
}

TEST_CASE("validate_subjects reports each invariant violation with the subject id") {
  CHECK(first_issue({subject("1", 5.0, true, 1, TreatmentPath({{0.0, 1}, {3.0, 1}}))}) ==
        ErrorCode::ConsecutiveEqualValues);
  CHECK(first_issue({subject("1", -1.0, true, 1, TreatmentPath::constant(1))}) == ErrorCode::NegativeTime);
  CHECK(first_issue({subject("1", 5.0, true, 1, TreatmentPath({{0.0, 2}}))}) == ErrorCode::NonBinaryTreatment);
  CHECK(first_issue({subject("1", 5.0, true, 1, TreatmentPath({{0.0, 1}, {3.0, 0}, {2.0, 1}}))}) ==
        ErrorCode::UnsortedChanges);
  CHECK(first_issue({subject("1", 5.0, true, 1, TreatmentPath({{1.0, 1}}))}) == ErrorCode::MissingInitialValue);
  CHECK(first_issue({subject("1", 5.0, true, 1), subject("1", 4.0, false, 0)}) == ErrorCode::DuplicateId);

  try {
    validate_subjects({subject("ok", 1.0, true, 1), subject("bad-a", -2.0, true, 1), subject("bad-b", 1.0, true, 1,
                                                                                              TreatmentPath({{0.0, 3}}))});
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    REQUIRE(e.issues().size() == 2);
    CHECK(e.issues()[0].subject_id == "bad-a");
    CHECK(e.issues()[1].subject_id == "bad-b");
    CHECK(std::string(e.what()).find("bad-a") != std::string::npos);
    CHECK(e.category() == ErrorCategory::Validation);
  }
}

TEST_CASE("validate_subjects trims changes after the record time") {
  const auto out = validate_subjects({subject("1", 2.0, true, 1, TreatmentPath({{0.0, 1}, {3.0, 0}}))});
  CHECK(out[0].path.changes().size() == 1);
}

TEST_CASE("build_event_table grid, ties and errors") {
  SUBCASE("two events") {
    const auto t = build_event_table({subject("1", 1.0, true, 1), subject("2", 2.0, true, 0)});
    REQUIRE(t.time_count() == 2);
    CHECK(t.event_times()[0] == 1.0);
    CHECK(t.event_times()[1] == 2.0);
    CHECK(t.tau() == 2.0);
  }
  SUBCASE("ties keep one grid entry with multiplicity") {
    const auto t = build_event_table({subject("1", 1.0, true, 1), subject("2", 1.0, true, 0), subject("3", 3.0, false, 0)});
    REQUIRE(t.time_count() == 1);
    CHECK(t.event_counts()[0] == 2);
    CHECK(t.tau() == 3.0);
  }
  SUBCASE("all censored") {
    CHECK_THROWS_AS(build_event_table({subject("1", 1.0, false, 1)}), Error);
    try {
      build_event_table({subject("1", 1.0, false, 1)});
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoEvents);
      CHECK(e.category() == ErrorCategory::Estimation);
    }
  }
  SUBCASE("horizon before the last event") {
    try {
      build_event_table({subject("1", 2.0, true, 1)}, 1.0);
      FAIL("expected HorizonTooShort");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::HorizonTooShort);
    }
  }
}

TEST_CASE("event table caches Y, D(t) and D(t-) exactly") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    auto records = validate_subjects(scsmiv::testing::random_dataset(rng, 40, 0.5));
    bool any = false;
    for (const auto& r : records) any = any || r.status;
    if (!any) continue;
    const auto table = build_event_table(records);
    const auto times = table.event_times();
    for (std::size_t i = 0; i < table.subject_count(); ++i) {
      const auto& r = table.subjects()[i];
      bool previous = true;
      for (std::size_t k = 0; k < table.time_count(); ++k) {
        const bool y = table.at_risk(i, k);
        CHECK(y == (r.time >= times[k]));
        CHECK((!y || previous));
        previous = y;
        if (!y) continue;
        CHECK(table.treated(i, k) == (r.treatment_at(times[k]) == 1));
        CHECK(table.treated_before(i, k) == (r.treatment_before(times[k]) == 1));
        CHECK(table.has_event(i, k) == (r.status && r.time == times[k]));
      }
      if (r.status) {
        const auto k = static_cast<std::size_t>(table.event_index(i));
        CHECK(times[k] == r.time);
        CHECK(table.at_risk(i, k));
      }
    }
  }
}

TEST_CASE("a switch exactly at an event time is seen at the event, not before it") {
  const auto table =
      build_event_table({subject("1", 3.0, true, 0, TreatmentPath::switching(0, 3.0)), subject("2", 4.0, true, 1)});
  CHECK(table.treated(0, 0));
  CHECK_FALSE(table.treated_before(0, 0));
}
