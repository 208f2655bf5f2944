#pragma once

// Append-only run persistence. A run directory holds
//   events.jsonl       one JSON object per line: {"v", "seq", "kind", ...payload}
//   timing.jsonl       {"seq", "wall_time"} per event, kept apart so that
//                      events.jsonl stays byte-reproducible
//   transcripts.jsonl  prompts and raw responses of LLM proposals, keyed by
//                      the seq of their proposal event
// Events are written in batches that end on a checkpoint event; a batch is
// either fully present or treated as never written.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace smcprog {

inline constexpr int kLogSchemaVersion = 1;

inline constexpr const char* kEventsFile = "events.jsonl";
inline constexpr const char* kTimingFile = "timing.jsonl";
inline constexpr const char* kTranscriptsFile = "transcripts.jsonl";

struct PendingEvent {
    std::string kind;
    nlohmann::json payload = nlohmann::json::object();
    std::optional<nlohmann::json> transcript;
};

using EventBatch = std::vector<PendingEvent>;

class RunLogWriter {
public:
    /// Opens the three log files in append mode; seq numbering continues at next_seq.
    RunLogWriter(std::filesystem::path dir, std::uint64_t next_seq = 0);

    /// Assigns consecutive seq numbers, marks the last event as a checkpoint,
    /// writes and flushes. Strings listed as secrets are redacted from transcripts.
    void write_batch(EventBatch batch);

    void add_secret(std::string secret);
    [[nodiscard]] std::uint64_t next_seq() const;
    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    std::ofstream events_;
    std::ofstream timing_;
    std::ofstream transcripts_;
    std::uint64_t next_seq_;
    std::vector<std::string> secrets_;
    mutable std::mutex mutex_;
};

struct LogContents {
    std::vector<nlohmann::json> events;
    /// seq of the last event that parsed cleanly, or nullopt if none did.
    std::optional<std::uint64_t> last_good_seq;
    /// A final line without a newline that failed to parse was dropped.
    bool torn_tail = false;
};

/// Reads events.jsonl. Throws Error(MissingRun) if the file is absent and
/// Error(CorruptLog) naming the last good seq on unparseable lines, schema
/// mismatches or seq gaps. With tolerate_torn_tail, an unterminated and
/// unparseable final line is dropped instead.
[[nodiscard]] LogContents read_event_log(const std::filesystem::path& dir, bool tolerate_torn_tail = false);

/// Drops every event, timing and transcript line with seq > keep_through.
void truncate_run_log(const std::filesystem::path& dir, std::uint64_t keep_through);

/// Event with "checkpoint": true that closes the last complete batch.
[[nodiscard]] std::optional<std::size_t> last_checkpoint(const std::vector<nlohmann::json>& events);

}  // namespace smcprog
