#include "ict/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace ict {

OfflineDataset OfflineDataset::subset(const std::vector<int>& indices) const {
    OfflineDataset out;
    out.provenance = provenance;
    out.designs.resize(static_cast<Eigen::Index>(indices.size()), designs.cols());
    out.scores.resize(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int r = indices[i];
        if (r < 0 || r >= size()) throw std::out_of_range("OfflineDataset::subset: row index out of range");
        out.designs.row(static_cast<Eigen::Index>(i)) = designs.row(r);
        out.scores(static_cast<Eigen::Index>(i)) = scores(r);
    }
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                           : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_cell(std::string_view cell, int row, std::size_t col) {
    cell = trim(cell);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size())
        throw std::runtime_error("row " + std::to_string(row) + ": non-numeric cell in column " +
                                 std::to_string(col) + ": '" + std::string(cell) + "'");
    return value;
}

}  // namespace

void save_dataset_csv(const OfflineDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (int j = 0; j < dataset.dim(); ++j) out << 'x' << j << ',';
    out << "y\n";
    for (int i = 0; i < dataset.size(); ++i) {
        for (int j = 0; j < dataset.dim(); ++j) out << format_double(dataset.designs(i, j)) << ',';
        out << format_double(dataset.scores(i)) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

OfflineDataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw std::runtime_error(path + ": no rows");
    const std::size_t columns = split_commas(trim(line)).size();
    if (columns < 2) throw std::runtime_error(path + ": header needs at least one design column and y");

    std::vector<std::vector<double>> rows;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        const std::string_view content = trim(line);
        if (content.empty()) continue;
        const auto cells = split_commas(content);
        if (cells.size() != columns)
            throw std::runtime_error(path + ": row " + std::to_string(row) + " has " +
                                     std::to_string(cells.size()) + " columns, expected " +
                                     std::to_string(columns));
        std::vector<double> values(columns);
        for (std::size_t c = 0; c < columns; ++c) values[c] = parse_cell(cells[c], row, c);
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw std::runtime_error(path + ": no rows");

    OfflineDataset d;
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto dim = static_cast<Eigen::Index>(columns - 1);
    d.designs.resize(n, dim);
    d.scores.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < dim; ++j) d.designs(i, j) = r[static_cast<std::size_t>(j)];
        d.scores(i) = r.back();
    }
    d.provenance.task = path;
    return d;
}

}  // namespace ict
