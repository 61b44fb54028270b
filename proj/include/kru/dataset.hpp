#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kru/errors.hpp"
#include "kru/space.hpp"

namespace kru {

/// Labeled regression data. Inputs are stored unlifted (length d); evaluation
/// code appends the constant coordinate 1.
struct Dataset {
    std::vector<Vec> inputs;
    std::vector<double> labels;

    std::size_t size() const { return inputs.size(); }
    std::size_t input_dim() const { return inputs.empty() ? 0 : inputs.front().size(); }

    void validate() const {
        if (inputs.size() != labels.size())
            throw InvalidParameter("dataset: inputs and labels have different lengths");
        if (inputs.empty()) throw InvalidParameter("dataset: at least one sample required");
        const std::size_t d = inputs.front().size();
        for (const Vec& x : inputs) {
            if (x.size() != d) throw InvalidParameter("dataset: inconsistent input dimensions");
            if (!all_finite(x)) throw InvalidParameter("dataset: non-finite input entry");
        }
        for (double y : labels)
            if (!std::isfinite(y)) throw InvalidParameter("dataset: non-finite label");
    }
};

inline Vec lift(const Vec& x) {
    Vec z = x;
    z.push_back(1.0);
    return z;
}

/// CSV with header x1,...,xd,y (just "y" when d = 0).
inline std::string dataset_to_csv(const Dataset& data) {
    std::ostringstream out;
    out.precision(17);
    const std::size_t d = data.input_dim();
    for (std::size_t c = 0; c < d; ++c) out << 'x' << (c + 1) << ',';
    out << "y\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double x : data.inputs[i]) out << x << ',';
        out << data.labels[i] << '\n';
    }
    return out.str();
}

inline Dataset dataset_from_csv(std::istream& in) {
    Dataset data;
    std::string header;
    if (!std::getline(in, header)) throw InvalidParameter("dataset CSV: missing header");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::size_t d = 0;
    {
        std::stringstream hs(header);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(hs, col, ',')) cols.push_back(col);
        if (cols.empty() || cols.back() != "y")
            throw InvalidParameter("dataset CSV: header must end with column 'y'");
        d = cols.size() - 1;
        for (std::size_t c = 0; c < d; ++c)
            if (cols[c] != "x" + std::to_string(c + 1))
                throw InvalidParameter("dataset CSV: expected column x" + std::to_string(c + 1) +
                                       ", found '" + cols[c] + "'");
    }
    std::string row;
    std::size_t lineno = 1;
    while (std::getline(in, row)) {
        ++lineno;
        if (!row.empty() && row.back() == '\r') row.pop_back();
        if (row.empty()) continue;
        std::stringstream rs(row);
        std::string cell;
        Vec values;
        while (std::getline(rs, cell, ',')) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw InvalidParameter("dataset CSV: bad number at line " + std::to_string(lineno));
            }
        }
        if (values.size() != d + 1)
            throw InvalidParameter("dataset CSV: wrong column count at line " +
                                   std::to_string(lineno));
        data.labels.push_back(values.back());
        values.pop_back();
        data.inputs.push_back(std::move(values));
    }
    data.validate();
    return data;
}

inline Dataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidParameter("cannot open dataset file: " + path.string());
    return dataset_from_csv(in);
}

} // namespace kru
