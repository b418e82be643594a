#include "hdgmm/dictionary.hpp"

#include <stdexcept>
#include <unordered_set>

namespace hdgmm {

void validate(const Dictionary& dict) {
    if (dict.count() < 1) {
        throw std::invalid_argument("dictionary: need at least one record");
    }
    if (dict.signal_dim() < 1) {
        throw std::invalid_argument("dictionary: signal dimension must be positive");
    }
    if (dict.labels.rows() != dict.signals.rows()) {
        throw std::invalid_argument(
            "dictionary: label rows (" + std::to_string(dict.labels.rows()) +
            ") do not match signal rows (" + std::to_string(dict.signals.rows()) + ")");
    }
    if (static_cast<Index>(dict.label_names.size()) != dict.labels.cols()) {
        throw std::invalid_argument(
            "dictionary: " + std::to_string(dict.label_names.size()) + " label names for " +
            std::to_string(dict.labels.cols()) + " label columns");
    }
    std::unordered_set<std::string> seen;
    for (const auto& name : dict.label_names) {
        if (name.empty()) {
            throw std::invalid_argument("dictionary: label names must be non-empty");
        }
        if (!seen.insert(name).second) {
            throw std::invalid_argument("dictionary: duplicate label name '" + name + "'");
        }
    }
    if (!dict.signals.allFinite() || !dict.labels.allFinite()) {
        throw std::invalid_argument("dictionary: entries must be finite");
    }
}

} // namespace hdgmm
