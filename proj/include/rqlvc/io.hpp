#pragma once

// File formats: sequence profiles and trained regressors as JSON, traces as
// CSV (one row per frame) and JSON, summary tables as CSV, RD curves as CSV.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "rqlvc/codec_sim.hpp"
#include "rqlvc/metrics.hpp"
#include "rqlvc/predictor.hpp"
#include "rqlvc/rate_control.hpp"

namespace rqlvc {

inline constexpr int kProfileSchemaVersion = 1;
inline constexpr int kRegressorSchemaVersion = 1;

nlohmann::json to_json(const FrameProfile& frame);
FrameProfile frame_profile_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SequenceProfile& profile);
SequenceProfile sequence_profile_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RegressorPredictor& regressor);
RegressorPredictor regressor_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SequenceTrace& trace);
SequenceTrace trace_from_json(const nlohmann::json& j);

// Stable column order: t, r_target, q_pred, r_enc, psnr_db, alpha, beta,
// deviation_pct. Numbers use the shortest round-trip representation.
inline constexpr const char* kTraceCsvHeader =
    "t,r_target,q_pred,r_enc,psnr_db,alpha,beta,deviation_pct";

void write_trace_csv(std::ostream& out, const SequenceTrace& trace);
// Metadata (sequence, method, target, seed) is not stored in the CSV body;
// the caller fills it, usually from the file name.
SequenceTrace read_trace_csv(std::istream& in);

// "<sequence>__<method>__<target>__s<seed>.csv"
std::string trace_file_name(const SequenceTrace& trace);
SequenceTrace read_trace_file(const std::filesystem::path& path);

inline constexpr const char* kSummaryCsvHeader =
    "sequence,method,target,mean_deviation_pct,bd_rate_pct";

void write_summary_csv(std::ostream& out, const Summary& summary);

// Rows of "rate,psnr"; an optional header line is skipped.
std::vector<RdPoint> read_rd_curve_csv(std::istream& in);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::string format_number(double value);

}  // namespace rqlvc
