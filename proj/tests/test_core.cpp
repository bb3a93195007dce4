#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "sc2/core.hpp"
#include "sc2/rng.hpp"
#include "sc2/text.hpp"

using namespace sc2;

namespace {

TextPairTask make_task(std::optional<PreferenceLabel> gold = std::nullopt) {
    TextPairTask t;
    t.id = "t1";
    t.kind = TaskKind::make(TaskFamily::Summarization, "toy");
    t.query = "an article";
    t.left = "p";
    t.right = "q";
    t.gold = gold;
    return t;
}

} // namespace

TEST_CASE("canonical phrase") {
    CHECK(text::canonical_phrase(" Coverage  ") == "coverage");
    CHECK(text::canonical_phrase("Coverage.") == "coverage");
    CHECK(text::canonical_phrase("．").empty());  // fullwidth full stop only
    CHECK(text::canonical_phrase("Clear   and\tconcise") == "clear and concise");
    CHECK(text::canonical_phrase("safety!!") == "safety");
    CHECK(text::canonical_phrase("tone。") == "tone");
    CHECK(text::canonical_phrase("a b") == "a b");  // nbsp collapses like a space
}

TEST_CASE("preference labels") {
    CHECK(to_side_letter(PreferenceLabel::Left) == 'A');
    CHECK(to_side_letter(PreferenceLabel::Right) == 'B');
    CHECK(label_from_letter('a') == PreferenceLabel::Left);
    CHECK(label_from_letter('B') == PreferenceLabel::Right);
    CHECK_THROWS_AS(label_from_letter('C'), ParseError);
    CHECK(flip(PreferenceLabel::Left) == PreferenceLabel::Right);
}

TEST_CASE("task kind requires a name") {
    CHECK_THROWS_AS(TaskKind::make(TaskFamily::Retrieval, ""), ValidationError);
    CHECK(task_family_from_string("Helpfulness") == TaskFamily::Helpfulness);
    CHECK_THROWS_AS(task_family_from_string("unknown"), ValidationError);
}

TEST_CASE("swap_sides on tasks") {
    TextPairTask t = make_task(PreferenceLabel::Left);
    TextPairTask s = swap_sides(t);
    CHECK(s.left == "q");
    CHECK(s.right == "p");
    CHECK(s.gold == PreferenceLabel::Right);

    TextPairTask back = swap_sides(s);
    CHECK(back.left == t.left);
    CHECK(back.right == t.right);
    CHECK(back.gold == t.gold);

    TextPairTask no_gold = swap_sides(make_task());
    CHECK_FALSE(no_gold.gold.has_value());
}

TEST_CASE("swap_sides on tables") {
    ComparisonTable t{{{"a", "x", "y", "s"}}, 3};
    ComparisonTable s = swap_sides(t);
    CHECK(s.rows[0].left_unique == "y");
    CHECK(s.rows[0].right_unique == "x");
    CHECK(s.rows[0].shared == "s");
    CHECK(swap_sides(s) == t);
}

TEST_CASE("swap_sides is an involution on random values") {
    RandomStream rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        TextPairTask t = make_task(rng.coin() ? std::optional(PreferenceLabel::Left)
                                              : std::optional(PreferenceLabel::Right));
        t.left = "left" + std::to_string(rng.next_u64() % 1000);
        t.right = "right" + std::to_string(rng.next_u64() % 1000);
        TextPairTask twice = swap_sides(swap_sides(t));
        CHECK(twice.left == t.left);
        CHECK(twice.right == t.right);
        CHECK(twice.gold == t.gold);

        ComparisonTable table;
        size_t rows = 1 + rng.uniform_index(5);
        for (size_t r = 0; r < rows; ++r) {
            table.rows.push_back({"aspect " + std::to_string(r),
                                  "l" + std::to_string(rng.next_u64() % 100),
                                  "r" + std::to_string(rng.next_u64() % 100),
                                  "s" + std::to_string(rng.next_u64() % 100)});
        }
        CHECK(swap_sides(swap_sides(table)) == table);
    }
}

TEST_CASE("aspect set invariants") {
    AspectSet ok = AspectSet::make({"coverage", "clarity"}, AspectProvenance::Manual);
    CHECK(ok.size() == 2);
    CHECK_THROWS_AS(AspectSet::make({}, AspectProvenance::Manual), ValidationError);
    std::vector<std::string> too_many(17);
    for (size_t i = 0; i < too_many.size(); ++i) too_many[i] = "a" + std::to_string(i);
    CHECK_THROWS_AS(AspectSet::make(too_many, AspectProvenance::Manual), ValidationError);
    // duplicates are detected after canonicalization
    CHECK_THROWS_AS(AspectSet::make({" Coverage ", "coverage."}, AspectProvenance::Manual),
                    ValidationError);
    CHECK_THROWS_AS(AspectSet::make({"．"}, AspectProvenance::Manual), ValidationError);
}

TEST_CASE("validate_table examples") {
    AspectSet aspects = AspectSet::make({"a", "b", "c"}, AspectProvenance::Manual);
    ComparisonTable good{{{"a", "", "", ""}, {"b", "x", "", ""}, {"c", "", "y", ""}}, 0};
    CHECK(validate_table(good, aspects).ok());

    ComparisonTable short_table{{{"a", "", "", ""}, {"b", "", "", ""}}, 0};
    ValidationReport r = validate_table(short_table, aspects);
    REQUIRE_FALSE(r.ok());
    CHECK(r.violations[0].find("row count 2 != aspect count 3") != std::string::npos);

    ComparisonTable unknown{{{"a", "", "", ""}, {"zzz", "", "", ""}, {"c", "", "", ""}}, 0};
    ValidationReport u = validate_table(unknown, aspects);
    REQUIRE_FALSE(u.ok());
    bool mentions_unknown = false;
    for (const std::string& v : u.violations) {
        if (v.find("unknown aspect") != std::string::npos) mentions_unknown = true;
    }
    CHECK(mentions_unknown);
}

TEST_CASE("validate_table is order sensitive") {
    AspectSet aspects = AspectSet::make({"a", "b", "c", "d"}, AspectProvenance::Manual);
    ComparisonTable table;
    for (const std::string& a : aspects.aspects) table.rows.push_back({a, "l", "r", "s"});
    REQUIRE(validate_table(table, aspects).ok());

    std::vector<size_t> perm{0, 1, 2, 3};
    RandomStream rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        rng.shuffle(perm);
        ComparisonTable shuffled;
        for (size_t i : perm) shuffled.rows.push_back(table.rows[i]);
        bool identity = std::is_sorted(perm.begin(), perm.end());
        CHECK(validate_table(shuffled, aspects).ok() == identity);
    }
}

TEST_CASE("determinism context replays streams by key") {
    DeterminismContext a(42);
    DeterminismContext b(42);

    RandomStream s1 = a.stream("purpose", "item-1");
    RandomStream s2 = b.stream("purpose", "item-1");
    for (int i = 0; i < 32; ++i) CHECK(s1.next_u64() == s2.next_u64());

    // creation order must not matter
    RandomStream x1 = a.stream("x", "1");
    RandomStream y1 = a.stream("y", "1");
    RandomStream y2 = b.stream("y", "1");
    RandomStream x2 = b.stream("x", "1");
    CHECK(x1.next_u64() == x2.next_u64());
    CHECK(y1.next_u64() == y2.next_u64());
}

TEST_CASE("determinism context separates keys") {
    DeterminismContext ctx(42);
    CHECK(ctx.derive("p", "i") != ctx.derive("p", "j"));
    CHECK(ctx.derive("p", "i") != ctx.derive("q", "i"));
    CHECK(ctx.derive("ab", "c") != ctx.derive("a", "bc"));
    CHECK(DeterminismContext(1).derive("p", "i") != DeterminismContext(2).derive("p", "i"));
    CHECK(ctx.child("round", 0).derive("p") != ctx.child("round", 1).derive("p"));
}

TEST_CASE("uniform_index stays in range and is roughly uniform") {
    RandomStream rng(9001);
    std::vector<long> counts(5, 0);
    for (int i = 0; i < 50000; ++i) {
        size_t v = rng.uniform_index(5);
        REQUIRE(v < 5);
        ++counts[v];
    }
    for (long c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("shuffle is a deterministic permutation") {
    std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> v2 = v1;
    RandomStream a(5);
    RandomStream b(5);
    a.shuffle(v1);
    b.shuffle(v2);
    CHECK(v1 == v2);
    std::multiset<int> sorted(v1.begin(), v1.end());
    CHECK(sorted == std::multiset<int>{1, 2, 3, 4, 5, 6, 7, 8});
}
