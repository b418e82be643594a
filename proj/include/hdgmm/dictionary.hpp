#ifndef HDGMM_DICTIONARY_HPP
#define HDGMM_DICTIONARY_HPP

#include <string>
#include <vector>

#include "hdgmm/model.hpp"

namespace hdgmm {

// N signals of dimension M with P physical parameter labels per signal.
struct Dictionary {
    Matrix signals;                       // N x M
    Matrix labels;                        // N x P
    std::vector<std::string> label_names; // P entries

    Index count() const { return signals.rows(); }
    Index signal_dim() const { return signals.cols(); }
    Index param_dim() const { return labels.cols(); }
};

// Throws on inconsistent row counts, name counts or non-finite entries.
void validate(const Dictionary& dict);

} // namespace hdgmm

#endif
