#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "sc2/predict.hpp"

using namespace sc2;

namespace {

const PromptCatalog& catalog() {
    static PromptCatalog cat(std::string(SC2_REPO_DIR) + "/templates");
    return cat;
}

TextPairTask make_task(const std::string& id = "t1",
                       std::optional<PreferenceLabel> gold = PreferenceLabel::Left) {
    TextPairTask t;
    t.id = id;
    t.kind = TaskKind::make(TaskFamily::Helpfulness, "toy");
    t.query = "question " + id;
    t.left = "left answer " + id;
    t.right = "right answer " + id;
    t.gold = gold;
    return t;
}

AspectSet aspects() {
    return AspectSet::make({"a1", "a2", "a3"}, AspectProvenance::Manual);
}

std::string table_text(const std::string& tag) {
    return "| Aspect | Unique to A | Unique to B | Shared |\n"
           "| --- | --- | --- | --- |\n"
           "| a1 | L " + tag + " | R " + tag + " | S " + tag + " |\n"
           "| a2 | l " + tag + " | r " + tag + " | s " + tag + " |\n"
           "| a3 | x " + tag + " | y " + tag + " | z " + tag + " |\n";
}

/// A script with enough responses for one full pass of every method on one
/// item, all preference answers scripted to the given letter.
MockScript full_script(char letter, int comparisons = 8, int comparator_verdicts = 7,
                       int preference_answers = 16) {
    MockScript script;
    std::vector<std::string> tables;
    for (int i = 0; i < comparisons; ++i) tables.push_back(table_text("s" + std::to_string(i)));
    script.rules.push_back(MockRule{Role::Comparison, {}, tables});
    script.rules.push_back(MockRule{
        Role::Comparator, {},
        std::vector<std::string>(static_cast<size_t>(comparator_verdicts),
                                 "More consistent: A\nJustifications: scripted.")});
    script.rules.push_back(MockRule{
        Role::Preference, {},
        std::vector<std::string>(static_cast<size_t>(preference_answers),
                                 std::string("Comparison: scripted.\nPreferred: ") + letter)});
    return script;
}

FewshotExample exemplar() {
    FewshotExample ex;
    ex.query = "example question";
    ex.left = "example left";
    ex.right = "example right";
    ex.answer = "Comparison: example.\nPreferred: A";
    ex.table = table_text("ex");
    return ex;
}

MethodTag tag(Method m) {
    MethodTag t;
    t.method = m;
    return t;
}

} // namespace

TEST_CASE("majority_vote laws") {
    DeterminismContext ctx(0);
    using L = PreferenceLabel;
    CHECK(majority_vote({L::Left, L::Left, L::Right}, ctx) == L::Left);
    CHECK(majority_vote({L::Right, L::Left, L::Left}, ctx) == L::Left);  // permutation invariant
    for (uint64_t seed = 0; seed < 50; ++seed) {
        DeterminismContext c(seed);
        CHECK(majority_vote(std::vector<L>(8, L::Right), c) == L::Right);
    }
    CHECK_THROWS_AS(majority_vote({}, ctx), ValidationError);
}

TEST_CASE("majority_vote ties split roughly evenly across seeds") {
    using L = PreferenceLabel;
    long left = 0;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        DeterminismContext ctx(seed);
        if (majority_vote({L::Left, L::Right}, ctx, "tie-item") == L::Left) ++left;
    }
    CHECK(left > 450);
    CHECK(left < 550);
    // and the draw is reproducible per seed
    DeterminismContext ctx(17);
    CHECK(majority_vote({L::Left, L::Right}, ctx, "x") ==
          majority_vote({L::Right, L::Left}, ctx, "x"));
}

TEST_CASE("method tag validation") {
    MethodTag dp = tag(Method::DP);
    dp.selection_opt = SelectionStrategy::Exact;
    CHECK_THROWS_AS(dp.validate(), ConfigError);

    MethodTag cot = tag(Method::CoT0);
    cot.selfcon_k_opt = 4;
    CHECK_THROWS_AS(cot.validate(), ConfigError);

    MethodTag cot1 = tag(Method::CoT1);
    cot1.fewshot_k_opt = 3;
    CHECK_THROWS_AS(cot1.validate(), ConfigError);
    cot1.fewshot_k_opt = 1;
    CHECK_NOTHROW(cot1.validate());

    MethodTag sc2 = tag(Method::SC2);
    sc2.sample_count_opt = 0;
    CHECK_THROWS_AS(sc2.validate(), ConfigError);
    sc2.sample_count_opt = 8;
    sc2.fewshot_k_opt = 6;
    CHECK_THROWS_AS(sc2.validate(), ConfigError);
    sc2.fewshot_k_opt = 3;
    CHECK_NOTHROW(sc2.validate());

    CHECK(tag(Method::SC2).sample_count() == 8);
    CHECK(tag(Method::SelfCon).selfcon_k() == 8);
    CHECK(tag(Method::CoT1).fewshot_k() == 1);
    CHECK(tag(Method::DP).fewshot_k() == 0);
}

TEST_CASE("single-call baselines spend exactly one preference call") {
    for (Method m : {Method::DP, Method::DPAspects, Method::CoT0, Method::CoT1}) {
        Provider provider(std::make_shared<MockBackend>(full_script('B')));
        PredictContext pc{provider, catalog(), DeterminismContext(1), 0};
        std::vector<FewshotExample> shots;
        if (m == Method::CoT1) shots.push_back(exemplar());
        PredictionRecord rec = predict(pc, make_task(), tag(m),
                                       m == Method::DPAspects
                                           ? std::optional<AspectSet>(aspects())
                                           : std::nullopt,
                                       shots);
        CHECK(rec.predicted == PreferenceLabel::Right);
        CHECK(rec.usage[Role::Preference].calls == 1);
        CHECK(rec.usage[Role::Comparison].calls == 0);
        CHECK(rec.usage[Role::Comparator].calls == 0);
        CHECK(rec.usage[Role::Aspect].calls == 0);
        CHECK_FALSE(rec.failed());
    }
}

TEST_CASE("sc2 tournament per-item ledger matches the per-method formula") {
    Provider provider(std::make_shared<MockBackend>(full_script('A')));
    PredictContext pc{provider, catalog(), DeterminismContext(7), 0};
    MethodTag m = tag(Method::SC2);
    m.sample_count_opt = 8;
    PredictionRecord rec = predict(pc, make_task(), m, aspects());
    CHECK(rec.usage[Role::Comparison].calls == 8);
    CHECK(rec.usage[Role::Comparator].calls == 7);
    CHECK(rec.usage[Role::Preference].calls == 1);
    CHECK(rec.predicted == PreferenceLabel::Left);
    REQUIRE(rec.chosen_table.has_value());
    CHECK(rec.chosen_table->rows.size() == 3);
    CHECK(rec.aspects == aspects().aspects);
}

TEST_CASE("sc2 with one sample degenerates to single-table prompting") {
    Provider provider(std::make_shared<MockBackend>(full_script('B', 1, 0, 1)));
    PredictContext pc{provider, catalog(), DeterminismContext(7), 0};
    MethodTag m = tag(Method::SC2);
    m.sample_count_opt = 1;
    PredictionRecord rec = predict(pc, make_task(), m, aspects());
    CHECK(rec.usage[Role::Comparison].calls == 1);
    CHECK(rec.usage[Role::Comparator].calls == 0);
    CHECK(rec.usage[Role::Preference].calls == 1);
    CHECK(rec.predicted == PreferenceLabel::Right);
}

TEST_CASE("sc2 exact selection spends ordered-pair judge calls") {
    Provider provider(std::make_shared<MockBackend>(full_script('A', 8, 56, 1)));
    PredictContext pc{provider, catalog(), DeterminismContext(3), 0};
    MethodTag m = tag(Method::SC2);
    m.sample_count_opt = 8;
    m.selection_opt = SelectionStrategy::Exact;
    PredictionRecord rec = predict(pc, make_task(), m, aspects());
    CHECK(rec.usage[Role::Comparator].calls == 56);
}

TEST_CASE("sc2 random selection spends no comparator calls") {
    Provider provider(std::make_shared<MockBackend>(full_script('A', 8, 0, 1)));
    PredictContext pc{provider, catalog(), DeterminismContext(3), 0};
    MethodTag m = tag(Method::SC2);
    m.sample_count_opt = 8;
    m.selection_opt = SelectionStrategy::Random;
    PredictionRecord rec = predict(pc, make_task(), m, aspects());
    CHECK(rec.usage[Role::Comparator].calls == 0);
    CHECK(rec.usage[Role::Comparison].calls == 8);
}

TEST_CASE("sc2 few-shot exemplars flow into both prompt stages") {
    // exemplar text must reach the comparison and preference prompts; rules
    // keyed on the exemplar tag only match when it does
    MockScript script;
    std::vector<std::string> tables;
    for (int i = 0; i < 2; ++i) tables.push_back(table_text("s" + std::to_string(i)));
    script.rules.push_back(
        MockRule{Role::Comparison, {"EXEMPLAR-QUERY-TAG"}, tables});
    script.rules.push_back(MockRule{Role::Comparator, {}, {"More consistent: A"}});
    script.rules.push_back(MockRule{
        Role::Preference, {"EXEMPLAR-QUERY-TAG"}, {"Comparison: ok.\nPreferred: B"}});
    Provider provider(std::make_shared<MockBackend>(script));
    PredictContext pc{provider, catalog(), DeterminismContext(1), 0};

    FewshotExample ex = exemplar();
    ex.query = "EXEMPLAR-QUERY-TAG question";
    MethodTag m = tag(Method::SC2);
    m.sample_count_opt = 2;
    m.fewshot_k_opt = 1;
    PredictionRecord rec = predict(pc, make_task(), m, aspects(), {ex});
    CHECK(rec.predicted == PreferenceLabel::Right);
    CHECK(rec.usage[Role::Comparison].calls == 2);
    CHECK(rec.usage[Role::Comparator].calls == 1);
}

TEST_CASE("selfcon majority and vote split") {
    MockScript script;
    std::vector<std::string> votes;
    for (char c : {'A', 'B', 'A', 'A', 'B', 'A', 'B', 'A'})  // 5 A, 3 B
        votes.push_back(std::string("Comparison: v.\nPreferred: ") + c);
    script.rules.push_back(MockRule{Role::Preference, {}, votes});
    Provider provider(std::make_shared<MockBackend>(script));
    PredictContext pc{provider, catalog(), DeterminismContext(2), 0};
    MethodTag m = tag(Method::SelfCon);
    m.selfcon_k_opt = 8;
    PredictionRecord rec = predict(pc, make_task(), m);
    CHECK(rec.predicted == PreferenceLabel::Left);
    CHECK(rec.vote_split == std::make_pair(5, 3));
    CHECK(rec.usage[Role::Preference].calls == 8);
}

TEST_CASE("selfcon even ties go to the seeded draw, both ways across seeds") {
    bool saw_left = false;
    bool saw_right = false;
    for (uint64_t seed = 0; seed < 40; ++seed) {
        MockScript script;
        script.rules.push_back(MockRule{
            Role::Preference, {}, {"Preferred: A", "Preferred: B"}});
        Provider provider(std::make_shared<MockBackend>(script));
        PredictContext pc{provider, catalog(), DeterminismContext(seed), 0};
        MethodTag m = tag(Method::SelfCon);
        m.selfcon_k_opt = 2;
        PredictionRecord rec = predict(pc, make_task(), m);
        (rec.predicted == PreferenceLabel::Left ? saw_left : saw_right) = true;
    }
    CHECK(saw_left);
    CHECK(saw_right);
}

TEST_CASE("selfcon with k=1 matches cot0 output") {
    MockScript script;
    script.rules.push_back(MockRule{
        Role::Preference, {}, {"Preferred: B", "Preferred: B"}});
    Provider provider(std::make_shared<MockBackend>(script));
    PredictContext pc{provider, catalog(), DeterminismContext(4), 0};
    MethodTag sc = tag(Method::SelfCon);
    sc.selfcon_k_opt = 1;
    PredictionRecord a = predict(pc, make_task(), sc);
    PredictionRecord b = predict(pc, make_task(), tag(Method::CoT0));
    CHECK(a.predicted == b.predicted);
    CHECK(a.usage[Role::Preference].calls == 1);
}

TEST_CASE("selfcon drops unparseable votes and records them") {
    MockScript script;
    script.rules.push_back(MockRule{
        Role::Preference, {}, {"Preferred: A", "no verdict", "Preferred: A"}});
    Provider provider(std::make_shared<MockBackend>(script));
    PredictContext pc{provider, catalog(), DeterminismContext(4), 0};
    MethodTag m = tag(Method::SelfCon);
    m.selfcon_k_opt = 3;
    PredictionRecord rec = predict(pc, make_task(), m);
    CHECK(rec.predicted == PreferenceLabel::Left);
    CHECK(rec.vote_split == std::make_pair(2, 0));
    REQUIRE(rec.repairs.size() == 1);
    CHECK(rec.repairs[0].find("unparseable vote") != std::string::npos);
}

TEST_CASE("pipeline neutrality: an always-A mock makes every method predict Left") {
    for (Method m : {Method::DP, Method::DPAspects, Method::CoT0, Method::CoT1, Method::SelfCon,
                     Method::SC2}) {
        Provider provider(std::make_shared<MockBackend>(full_script('A')));
        PredictContext pc{provider, catalog(), DeterminismContext(11), 0};
        std::vector<FewshotExample> shots;
        if (m == Method::CoT1) shots.push_back(exemplar());
        PredictionRecord rec =
            predict(pc, make_task(), tag(m),
                    (m == Method::DPAspects || m == Method::SC2)
                        ? std::optional<AspectSet>(aspects())
                        : std::nullopt,
                    shots);
        CHECK(rec.predicted == PreferenceLabel::Left);
    }
}

TEST_CASE("predict rejects missing aspects for aspect methods") {
    Provider provider(std::make_shared<MockBackend>(full_script('A')));
    PredictContext pc{provider, catalog(), DeterminismContext(1), 0};
    CHECK_THROWS_AS(predict(pc, make_task(), tag(Method::SC2)), ConfigError);
    CHECK_THROWS_AS(predict(pc, make_task(), tag(Method::DPAspects)), ConfigError);
}

TEST_CASE("predict_item turns failures into failed records") {
    MockScript empty;  // no rules, no default: every generate call fails
    Provider provider(std::make_shared<MockBackend>(empty));
    PredictContext pc{provider, catalog(), DeterminismContext(1), 0};
    PredictionRecord rec = predict_item(pc, make_task(), tag(Method::DP));
    CHECK(rec.failed());
    CHECK_FALSE(rec.error.empty());
    CHECK_FALSE(rec.correct());
}

TEST_CASE("records serialize with the stable schema") {
    Provider provider(std::make_shared<MockBackend>(full_script('A')));
    PredictContext pc{provider, catalog(), DeterminismContext(5), 2};
    MethodTag m = tag(Method::SC2);
    PredictionRecord rec = predict(pc, make_task("t9"), m, aspects());
    nlohmann::json j = rec.to_json();
    CHECK(j.at("schema") == "record_v1");
    CHECK(j.at("task_id") == "t9");
    CHECK(j.at("method").at("tag") == "SC2");
    CHECK(j.at("predicted") == "A");
    CHECK(j.at("gold") == "A");
    CHECK(j.at("failed") == false);
    CHECK(j.at("seed").at("master_seed") == 5);
    CHECK(j.at("seed").at("round") == 2);
    CHECK(j.at("chosen_table").is_string());
    CHECK(j.at("usage").at("roles").at("comparator").at("calls") == 7);
}
