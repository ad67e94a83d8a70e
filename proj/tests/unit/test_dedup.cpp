#include "helpers.hpp"

#include "cyberally/dedup.hpp"

using namespace cyberally;
using testutil::alert;
using testutil::at;
using testutil::code_of;

namespace {

const Lexicon& lex() {
    static auto l = testutil::lexicon({{"failed", {1, 0, 0}}, {"login", {0, 1, 0}}, {"disk", {0, 0, 1}}});
    return l;
}

DedupVerdict feed(DedupFilter& f, const Alert& a) { return f.check_and_admit(a, embed(lex(), alert_text(a))); }

} // namespace

TEST_SUITE("dedup") {

TEST_CASE("first alert becomes the reference, repeats within the window are dropped") {
    DedupFilter f;
    auto t0 = at("2024-05-01T10:00:00Z");
    auto a = feed(f, alert("A", "failed login", t0));
    CHECK_FALSE(a.is_duplicate);
    CHECK(f.reference_count() == 1);

    auto b = feed(f, alert("B", "failed login", t0 + minutes(1)));
    CHECK(b.is_duplicate);
    CHECK(b.matched_id == "A");
    CHECK(*b.similarity == doctest::Approx(1.0));
    CHECK(f.reference_count() == 1);

    auto c = feed(f, alert("C", "failed login", t0 + minutes(31)));
    CHECK_FALSE(c.is_duplicate);
    CHECK(f.reference_count() == 1);
}

TEST_CASE("threshold is inclusive") {
    // cos([1,1,0],[1,0,0]) = 1/sqrt(2)
    double s = *cosine_similarity(std::vector<double>{0.5, 0.5, 0}, std::vector<double>{1, 0, 0});
    DedupFilter f({s, minutes(30), seconds(5)});
    auto t0 = at("2024-05-01T10:00:00Z");
    feed(f, alert("A", "failed", t0));
    CHECK(feed(f, alert("B", "failed login", t0 + seconds(1))).is_duplicate);
}

TEST_CASE("distinct texts are all kept") {
    DedupFilter f;
    auto t0 = at("2024-05-01T10:00:00Z");
    CHECK_FALSE(feed(f, alert("A", "failed", t0)).is_duplicate);
    CHECK_FALSE(feed(f, alert("B", "login", t0)).is_duplicate);
    CHECK_FALSE(feed(f, alert("C", "disk", t0)).is_duplicate);
    CHECK(f.reference_count() == 3);
}

TEST_CASE("zero vectors are admitted and never stored") {
    DedupFilter f;
    auto t0 = at("2024-05-01T10:00:00Z");
    CHECK_FALSE(feed(f, alert("A", "unknown words", t0)).is_duplicate);
    CHECK_FALSE(feed(f, alert("B", "unknown words", t0 + seconds(1))).is_duplicate);
    CHECK(f.reference_count() == 0);
}

TEST_CASE("ties go to the earliest reference") {
    DedupFilter f({0.6, minutes(30), seconds(5)});
    auto t0 = at("2024-05-01T10:00:00Z");
    feed(f, alert("A", "failed", t0));
    feed(f, alert("B", "login", t0 + seconds(1)));
    auto v = feed(f, alert("C", "failed login", t0 + seconds(2)));
    CHECK(v.is_duplicate);
    CHECK(v.matched_id == "A");
}

TEST_CASE("late arrivals") {
    DedupFilter f;
    auto t0 = at("2024-05-01T10:00:00Z");
    feed(f, alert("A", "failed", t0));
    CHECK_NOTHROW(feed(f, alert("B", "login", t0 - seconds(5))));
    CHECK(code_of([&] { feed(f, alert("C", "disk", t0 - seconds(6))); }) == ErrorCode::OutOfOrderTimestamp);
    // the rejected alert must not move the clock
    CHECK_NOTHROW(feed(f, alert("D", "disk", t0 - seconds(4))));
}

TEST_CASE("config validation") {
    CHECK(code_of([] { DedupFilter({0.0, minutes(30), seconds(5)}); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { DedupFilter({1.5, minutes(30), seconds(5)}); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { DedupFilter({0.9, minutes(0), seconds(5)}); }) == ErrorCode::InvalidConfig);
}

}
