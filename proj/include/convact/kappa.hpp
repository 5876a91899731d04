#ifndef CONVACT_KAPPA_HPP
#define CONVACT_KAPPA_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace convact {

// Cohen's kappa for two equal-length label sequences.
// kappa = (p_o - p_e) / (1 - p_e). If both marginals are degenerate
// (p_e == 1) and the raters agree everywhere, returns 1; degenerate
// marginals with disagreement raise an error.
double cohen_kappa(const std::vector<std::string>& labels_a,
                   const std::vector<std::string>& labels_b);

struct AgreementTable {
    // Label -> one-vs-rest kappa; absent from the map when the label never
    // occurs in either sequence (kappa undefined).
    std::map<std::string, double> per_label;
    double overall = 0.0;
    std::size_t n_items = 0;
};

AgreementTable per_label_kappa(const std::vector<std::string>& labels_a,
                               const std::vector<std::string>& labels_b,
                               const std::vector<std::string>& label_set);

// Annotation file: TSV with columns item_id, annotator_id, label.
// Returns annotator_id -> labels ordered by first appearance of item_id.
// Items missing a label from any annotator are dropped.
std::map<std::string, std::vector<std::string>> load_annotations(const std::string& path);

// For more than two annotators the table reports, per label and overall,
// the mean of all pairwise Cohen's kappas.
AgreementTable mean_pairwise_agreement(
    const std::map<std::string, std::vector<std::string>>& by_annotator,
    const std::vector<std::string>& label_set);

std::string agreement_table_tsv(const AgreementTable& table);
std::string agreement_table_markdown(const AgreementTable& table);

}  // namespace convact

#endif
