#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ict/harness.hpp"

namespace ict {

using nlohmann::json;

ReportFormat report_format_from_string(const std::string& name) {
    if (name == "json") return ReportFormat::json;
    if (name == "csv") return ReportFormat::csv;
    if (name == "markdown" || name == "md" || name == "markdown-table") return ReportFormat::markdown;
    throw std::invalid_argument("unknown format '" + name + "' (expected json, csv or markdown)");
}

namespace {

json mean_se_json(const MeanSe& m) {
    return {{"mean", m.mean}, {"se", m.se ? json(*m.se) : json(nullptr)}};
}

MeanSe mean_se_from(const json& j) {
    MeanSe m;
    m.mean = j.at("mean").get<double>();
    if (!j.at("se").is_null()) m.se = j.at("se").get<double>();
    return m;
}

std::string fixed(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string cell(const MeanSe& m) {
    return m.se ? fixed(m.mean) + " ± " + fixed(*m.se) : fixed(m.mean);
}

std::string csv_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

json to_json(const RunReport& report) {
    json trials = json::array();
    for (const auto& t : report.trials)
        trials.push_back({{"seed", t.seed},
                          {"best", t.best},
                          {"median", t.median},
                          {"gamma_used", t.gamma_used},
                          {"eta_used", t.eta_used},
                          {"above_reference_max", t.above_reference_max}});
    return {{"task", report.task},
            {"method", report.method},
            {"config", report.config},
            {"dataset_best_normalized", report.dataset_best_normalized},
            {"trials", trials},
            {"summary", {{"best", mean_se_json(report.best)}, {"median", mean_se_json(report.median)}}},
            {"oracle_violations", report.oracle_violations}};
}

RunReport report_from_json(const json& j) {
    RunReport r;
    r.task = j.at("task").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.config = j.at("config");
    r.dataset_best_normalized = j.at("dataset_best_normalized").get<double>();
    for (const auto& t : j.at("trials")) {
        TrialReport tr;
        tr.seed = t.at("seed").get<std::uint64_t>();
        tr.best = t.at("best").get<double>();
        tr.median = t.at("median").get<double>();
        tr.gamma_used = t.at("gamma_used").get<double>();
        tr.eta_used = t.at("eta_used").get<double>();
        tr.above_reference_max = t.at("above_reference_max").get<bool>();
        r.trials.push_back(tr);
    }
    r.best = mean_se_from(j.at("summary").at("best"));
    r.median = mean_se_from(j.at("summary").at("median"));
    r.oracle_violations = j.at("oracle_violations").get<std::uint64_t>();
    return r;
}

std::string canonical_json(const RunReport& report) { return to_json(report).dump(2) + "\n"; }

std::string canonical_json(const std::vector<RunReport>& reports) {
    if (reports.size() == 1) return canonical_json(reports.front());
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    return arr.dump(2) + "\n";
}

std::string to_csv(const std::vector<RunReport>& reports) {
    std::ostringstream out;
    out << "task,method,seed,best_normalized,median_normalized,gamma_used,eta_used\n";
    for (const auto& r : reports)
        for (const auto& t : r.trials)
            out << r.task << ',' << r.method << ',' << t.seed << ',' << csv_double(t.best) << ','
                << csv_double(t.median) << ',' << csv_double(t.gamma_used) << ',' << csv_double(t.eta_used)
                << '\n';
    return out.str();
}

std::string to_markdown(const std::vector<RunReport>& reports) {
    std::ostringstream out;
    out << "| task | method | 100th pct (mean ± se) | 50th pct (mean ± se) |\n";
    out << "|---|---|---|---|\n";
    for (const auto& r : reports)
        out << "| " << r.task << " | " << r.method << " | " << cell(r.best) << " | " << cell(r.median) << " |\n";
    return out.str();
}

std::string rank_markdown(const std::vector<MethodRank>& ranks) {
    std::ostringstream out;
    out << "| method | mean rank | median rank |\n|---|---|---|\n";
    for (const auto& r : ranks)
        out << "| " << r.method << " | " << fixed(r.mean_rank, 2) << " | " << fixed(r.median_rank, 2) << " |\n";
    return out.str();
}

std::string render(const std::vector<RunReport>& reports, ReportFormat format) {
    switch (format) {
        case ReportFormat::json: return canonical_json(reports);
        case ReportFormat::csv: return to_csv(reports);
        case ReportFormat::markdown: return to_markdown(reports);
    }
    throw std::invalid_argument("render: bad format");
}

void emit(const std::vector<RunReport>& reports, ReportFormat format, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << render(reports, format);
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<RunReport> read_reports(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    std::vector<RunReport> out;
    try {
        if (j.is_array())
            for (const auto& item : j) out.push_back(report_from_json(item));
        else
            out.push_back(report_from_json(j));
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": not a run report: " + e.what());
    }
    return out;
}

}  // namespace ict
