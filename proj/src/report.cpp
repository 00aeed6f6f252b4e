#include "har/report.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "har/error.hpp"

namespace har {

std::string report_csv(const EvalReport& report) {
    std::string out(kReportCsvHeader);
    out += '\n';
    for (const auto& r : report.rows) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", report.dataset, r.fold, r.subject, r.variant, r.seed,
                           r.accuracy, r.macro_f1, r.n_train, r.n_transfer, r.n_test);
    }
    return out;
}

std::string report_markdown(const EvalReport& report) {
    std::string out = fmt::format("# Leave-one-subject-out results: {}\n\n", report.dataset);
    if (!report.config_digest.empty()) out += fmt::format("Config digest: `{}`\n\n", report.config_digest);
    out += "| variant | rows | mean accuracy | std accuracy | mean macro-F1 | std macro-F1 |\n";
    out += "|---|---:|---:|---:|---:|---:|\n";
    const auto aggregates = report.aggregates();
    for (const auto& s : aggregates) {
        out += fmt::format("| {} | {} | {:.12f} | {:.12f} | {:.12f} | {:.12f} |\n", s.variant, s.rows, s.mean_accuracy,
                           s.std_accuracy, s.mean_macro_f1, s.std_macro_f1);
    }

    // subject -> variant -> (sum, n)
    std::map<std::string, std::map<std::string, std::pair<double, int>>> per_subject;
    for (const auto& r : report.rows) {
        auto& cell = per_subject[r.subject][r.variant];
        cell.first += r.accuracy;
        cell.second += 1;
    }
    out += "\nMean holdout accuracy per test subject:\n\n| subject |";
    for (const auto& s : aggregates) out += fmt::format(" {} |", s.variant);
    out += "\n|---|";
    for (std::size_t i = 0; i < aggregates.size(); ++i) out += "---:|";
    out += '\n';
    for (const auto& [subject, cells] : per_subject) {
        out += fmt::format("| {} |", subject);
        for (const auto& s : aggregates) {
            const auto it = cells.find(s.variant);
            if (it == cells.end()) out += " - |";
            else out += fmt::format(" {:.4f} |", it->second.first / it->second.second);
        }
        out += '\n';
    }
    return out;
}

namespace {

template <typename T>
T parse_field(std::string_view s, std::size_t line, const char* name) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw FormatError(fmt::format("report CSV line {}: bad {} '{}'", line, name, std::string(s)));
    }
    return v;
}

}  // namespace

EvalReport parse_report_csv(std::string_view text) {
    EvalReport report;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != kReportCsvHeader) throw FormatError("report CSV header mismatch");
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::size_t start = 0;
        while (true) {
            const auto c = line.find(',', start);
            f.push_back(line.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start));
            if (c == std::string_view::npos) break;
            start = c + 1;
        }
        if (f.size() != 10) throw FormatError(fmt::format("report CSV line {}: expected 10 fields", line_no));
        if (report.rows.empty()) report.dataset = std::string(f[0]);
        FoldResult r;
        r.fold = parse_field<std::size_t>(f[1], line_no, "fold");
        r.subject = std::string(f[2]);
        r.variant = std::string(f[3]);
        r.seed = parse_field<std::uint64_t>(f[4], line_no, "seed");
        r.accuracy = parse_field<double>(f[5], line_no, "accuracy");
        r.macro_f1 = parse_field<double>(f[6], line_no, "macro_f1");
        r.n_train = parse_field<std::size_t>(f[7], line_no, "n_train");
        r.n_transfer = parse_field<std::size_t>(f[8], line_no, "n_transfer");
        r.n_test = parse_field<std::size_t>(f[9], line_no, "n_test");
        report.rows.push_back(std::move(r));
    }
    if (line_no == 0) throw FormatError("report CSV is empty");
    return report;
}

void export_report(const EvalReport& report, const std::filesystem::path& csv_path,
                   const std::filesystem::path& markdown_path) {
    auto write = [](const std::filesystem::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot open '{}' for writing", p.string()));
        out << text;
        if (!out) throw IoError(fmt::format("failed writing '{}'", p.string()));
    };
    write(csv_path, report_csv(report));
    write(markdown_path, report_markdown(report));
}

std::string config_digest(const nlohmann::json& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace har
