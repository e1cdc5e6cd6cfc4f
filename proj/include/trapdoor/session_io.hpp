#pragma once

#include <string>

#include "trapdoor/detection.hpp"

namespace trapdoor::detect {

/// Single JSON document mirroring SessionReport.
std::string render_report_json(const SessionReport& report);

/// One JSON object per line: ts, rule_id, kind, severity, flow,
/// packet_index, evidence, p_value. Alarms follow the findings of the flow
/// window that raised them, with rule_id "BAYES_ALARM".
std::string render_log(const SessionReport& report);

/// "window_index,findings,posterior,alarms", one row per scored window.
std::string render_plot_csv(const SessionReport& report);

/// Human-readable table from a report JSON document. Throws ConfigError on
/// malformed input.
std::string render_summary(const std::string& report_json);

std::string format_timestamp(Timestamp ts);

}  // namespace trapdoor::detect
