#include "convact/kappa.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "convact/errors.hpp"

namespace convact {

double cohen_kappa(const std::vector<std::string>& labels_a,
                   const std::vector<std::string>& labels_b) {
    if (labels_a.size() != labels_b.size())
        throw InvalidArgument("label sequences differ in length");
    if (labels_a.empty()) throw InvalidArgument("empty label sequences");

    const double n = static_cast<double>(labels_a.size());
    std::unordered_map<std::string, double> marg_a, marg_b;
    double agree = 0.0;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
        marg_a[labels_a[i]] += 1.0;
        marg_b[labels_b[i]] += 1.0;
        if (labels_a[i] == labels_b[i]) agree += 1.0;
    }
    const double p_o = agree / n;
    double p_e = 0.0;
    for (const auto& [label, count_a] : marg_a) {
        auto it = marg_b.find(label);
        if (it != marg_b.end()) p_e += (count_a / n) * (it->second / n);
    }
    if (p_e >= 1.0) {
        if (p_o >= 1.0) return 1.0;
        throw InvalidArgument("degenerate marginals: chance agreement is 1 but raters disagree");
    }
    return (p_o - p_e) / (1.0 - p_e);
}

namespace {

std::vector<std::string> binarize(const std::vector<std::string>& labels,
                                  const std::string& target) {
    std::vector<std::string> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[i] = (labels[i] == target) ? "1" : "0";
    return out;
}

}  // namespace

AgreementTable per_label_kappa(const std::vector<std::string>& labels_a,
                               const std::vector<std::string>& labels_b,
                               const std::vector<std::string>& label_set) {
    AgreementTable table;
    table.n_items = labels_a.size();
    table.overall = cohen_kappa(labels_a, labels_b);
    for (const auto& label : label_set) {
        bool present = false;
        for (const auto& l : labels_a)
            if (l == label) { present = true; break; }
        if (!present)
            for (const auto& l : labels_b)
                if (l == label) { present = true; break; }
        if (!present) continue;  // kappa undefined for an absent label
        table.per_label[label] = cohen_kappa(binarize(labels_a, label), binarize(labels_b, label));
    }
    return table;
}

std::map<std::string, std::vector<std::string>> load_annotations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw EmptyFileError(path);

    // item_id -> (annotator -> label), preserving item order of first sight
    std::vector<std::string> item_order;
    std::unordered_map<std::string, std::unordered_map<std::string, std::string>> by_item;
    std::set<std::string> annotators;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string item, annotator, label;
        if (!std::getline(ss, item, '\t') || !std::getline(ss, annotator, '\t') ||
            !std::getline(ss, label, '\t'))
            throw MalformedRowError(line_no, "expected item_id<TAB>annotator_id<TAB>label");
        if (!by_item.count(item)) item_order.push_back(item);
        by_item[item][annotator] = label;
        annotators.insert(annotator);
    }
    if (by_item.empty()) throw EmptyFileError(path);

    std::map<std::string, std::vector<std::string>> out;
    for (const auto& item : item_order) {
        const auto& row = by_item[item];
        if (row.size() != annotators.size()) continue;  // incomplete item
        for (const auto& a : annotators) out[a].push_back(row.at(a));
    }
    return out;
}

AgreementTable mean_pairwise_agreement(
    const std::map<std::string, std::vector<std::string>>& by_annotator,
    const std::vector<std::string>& label_set) {
    if (by_annotator.size() < 2) throw InvalidArgument("need at least two annotators");
    std::vector<const std::vector<std::string>*> seqs;
    for (const auto& [id, labels] : by_annotator) seqs.push_back(&labels);

    AgreementTable mean;
    mean.n_items = seqs.front()->size();
    std::map<std::string, std::size_t> label_pairs;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        for (std::size_t j = i + 1; j < seqs.size(); ++j) {
            AgreementTable t = per_label_kappa(*seqs[i], *seqs[j], label_set);
            mean.overall += t.overall;
            ++pairs;
            for (const auto& [label, k] : t.per_label) {
                mean.per_label[label] += k;
                ++label_pairs[label];
            }
        }
    }
    mean.overall /= static_cast<double>(pairs);
    for (auto& [label, k] : mean.per_label) k /= static_cast<double>(label_pairs[label]);
    return mean;
}

std::string agreement_table_tsv(const AgreementTable& table) {
    std::ostringstream out;
    out << "label\tkappa\n";
    char buf[64];
    for (const auto& [label, k] : table.per_label) {
        std::snprintf(buf, sizeof(buf), "%.4f", k);
        out << label << '\t' << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.4f", table.overall);
    out << "overall\t" << buf << '\n';
    return out.str();
}

std::string agreement_table_markdown(const AgreementTable& table) {
    std::ostringstream out;
    out << "| Code | kappa |\n|------|-------|\n";
    char buf[64];
    for (const auto& [label, k] : table.per_label) {
        std::snprintf(buf, sizeof(buf), "%.2f", k);
        out << "| " << label << " | " << buf << " |\n";
    }
    std::snprintf(buf, sizeof(buf), "%.3f", table.overall);
    out << "| overall | " << buf << " |\n";
    return out.str();
}

}  // namespace convact
