#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "har/eval.hpp"

namespace har {

inline constexpr std::string_view kReportCsvHeader =
    "dataset,fold,subject,variant,seed,accuracy,macro_f1,n_train,n_transfer,n_test";

/// One row per FoldResult; floats use the shortest round-trip form.
std::string report_csv(const EvalReport& report);

/// Per-variant mean/std table followed by per-subject mean accuracy.
std::string report_markdown(const EvalReport& report);

/// Rows only; confusion matrices and audit records are not in the CSV.
EvalReport parse_report_csv(std::string_view text);

/// Writes `csv_path` and `markdown_path`; IoError when unwritable.
void export_report(const EvalReport& report, const std::filesystem::path& csv_path,
                   const std::filesystem::path& markdown_path);

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_digest(const nlohmann::json& config);

}  // namespace har
