#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "convact/errors.hpp"
#include "convact/kappa.hpp"

using namespace convact;

namespace {

// Independent oracle: explicit contingency table.
double kappa_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, double> ma, mb;
    double agree = 0.0;
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1.0;
        mb[b[i]] += 1.0;
        if (a[i] == b[i]) agree += 1.0;
    }
    double po = agree / n;
    double pe = 0.0;
    for (const auto& [label, ca] : ma) {
        auto it = mb.find(label);
        if (it != mb.end()) pe += (ca / n) * (it->second / n);
    }
    if (pe == 1.0) return 1.0;  // callers ensure po == 1 in that case
    return (po - pe) / (1.0 - pe);
}

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("hand example reproduces kappa = 0.5 exactly") {
    // p_o = 3/4, p_e = 1/2 -> kappa = 1/2.
    std::vector<std::string> a = {"A", "A", "B", "B"};
    std::vector<std::string> b = {"A", "B", "B", "B"};
    CHECK(cohen_kappa(a, b) == 0.5);
}

TEST_CASE("degenerate marginals") {
    CHECK(cohen_kappa({"X", "X", "X"}, {"X", "X", "X"}) == 1.0);
    // Disjoint constant sequences: p_o = 0 and p_e = 0, so kappa = 0.
    CHECK(cohen_kappa({"X", "X"}, {"Y", "Y"}) == 0.0);
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(cohen_kappa({"A"}, {"A", "B"}), InvalidArgument);
    CHECK_THROWS_AS(cohen_kappa({}, {}), InvalidArgument);
}

TEST_CASE("matches the contingency-table oracle on random label sets") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> len_d(2, 120), k_d(2, 8);
        int len = len_d(rng), k = k_d(rng);
        std::uniform_int_distribution<int> lbl(0, k - 1);
        std::vector<std::string> a, b;
        for (int i = 0; i < len; ++i) {
            a.push_back("L" + std::to_string(lbl(rng)));
            b.push_back("L" + std::to_string(lbl(rng)));
        }
        // Skip the error case: disagreeing constant sequences.
        bool const_a = std::all_of(a.begin(), a.end(), [&](auto& s) { return s == a[0]; });
        bool const_b = std::all_of(b.begin(), b.end(), [&](auto& s) { return s == b[0]; });
        if (const_a && const_b && a[0] != b[0]) continue;
        CHECK(std::fabs(cohen_kappa(a, b) - kappa_oracle(a, b)) <= 1e-12);
    }
}

TEST_CASE("independent random labels give chance-level kappa") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> lbl(0, 3);
    std::vector<std::string> a, b;
    for (int i = 0; i < 20000; ++i) {
        a.push_back(std::to_string(lbl(rng)));
        b.push_back(std::to_string(lbl(rng)));
    }
    CHECK(std::fabs(cohen_kappa(a, b)) < 0.02);
}

TEST_CASE("per-label kappa is one-vs-rest binarization") {
    std::vector<std::string> a = {"A", "A", "B", "B", "C", "C"};
    std::vector<std::string> b = {"A", "B", "B", "B", "C", "A"};
    AgreementTable t = per_label_kappa(a, b, {"A", "B", "C", "D"});
    // Verify each entry against the oracle on binarized sequences.
    for (const std::string& label : {"A", "B", "C"}) {
        std::vector<std::string> ba, bb;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ba.push_back(a[i] == label ? "1" : "0");
            bb.push_back(b[i] == label ? "1" : "0");
        }
        REQUIRE(t.per_label.count(label) == 1);
        CHECK(t.per_label.at(label) == doctest::Approx(kappa_oracle(ba, bb)).epsilon(1e-12));
    }
    // Labels absent from both sequences are omitted (kappa undefined).
    CHECK(t.per_label.count("D") == 0);
    CHECK(t.overall == doctest::Approx(kappa_oracle(a, b)).epsilon(1e-12));
    CHECK(t.n_items == 6);
}

TEST_CASE("annotation file loading drops incomplete items") {
    std::string path = temp_file("annot.tsv");
    {
        std::ofstream out(path);
        out << "item_id\tannotator_id\tlabel\n";
        out << "i1\tr1\tS1\n";
        out << "i1\tr2\tS1\n";
        out << "i2\tr1\tS2\n";  // r2 never labels i2 -> dropped
        out << "i3\tr2\tS4\n";
        out << "i3\tr1\tS3\n";
    }
    auto by_annotator = load_annotations(path);
    REQUIRE(by_annotator.size() == 2);
    CHECK(by_annotator.at("r1") == std::vector<std::string>{"S1", "S3"});
    CHECK(by_annotator.at("r2") == std::vector<std::string>{"S1", "S4"});
    std::remove(path.c_str());
}

TEST_CASE("three annotators average all pairwise kappas") {
    std::map<std::string, std::vector<std::string>> data = {
        {"r1", {"A", "A", "B", "B", "A", "B"}},
        {"r2", {"A", "B", "B", "B", "A", "A"}},
        {"r3", {"B", "A", "B", "A", "A", "B"}},
    };
    AgreementTable t = mean_pairwise_agreement(data, {"A", "B"});
    double expected = (cohen_kappa(data["r1"], data["r2"]) +
                       cohen_kappa(data["r1"], data["r3"]) +
                       cohen_kappa(data["r2"], data["r3"])) /
                      3.0;
    CHECK(t.overall == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("agreement table renderers include every label row") {
    AgreementTable t = per_label_kappa({"A", "B", "A"}, {"A", "B", "B"}, {"A", "B"});
    std::string tsv = agreement_table_tsv(t);
    std::string md = agreement_table_markdown(t);
    CHECK(tsv.find("A\t") != std::string::npos);
    CHECK(tsv.find("overall") != std::string::npos);
    CHECK(md.find("| A |") != std::string::npos);
}
