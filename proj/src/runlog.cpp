#include "smcprog/runlog.hpp"

#include <chrono>
#include <sstream>

#include "smcprog/error.hpp"

namespace smcprog {

namespace fs = std::filesystem;

namespace {

std::ofstream open_append(const fs::path& p) {
    std::ofstream out(p, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + p.string() + " for writing");
    return out;
}

std::string redact(std::string text, const std::vector<std::string>& secrets) {
    for (const auto& s : secrets) {
        if (s.empty()) continue;
        for (auto pos = text.find(s); pos != std::string::npos; pos = text.find(s, pos + 10))
            text.replace(pos, s.size(), "[REDACTED]");
    }
    return text;
}

void redact_json(nlohmann::json& j, const std::vector<std::string>& secrets) {
    if (j.is_string()) {
        j = redact(j.get<std::string>(), secrets);
    } else if (j.is_structured()) {
        for (auto& v : j) redact_json(v, secrets);
    }
}

/// Rewrites file keeping lines whose "seq" is <= keep_through.
void filter_file(const fs::path& p, std::uint64_t keep_through) {
    if (!fs::exists(p)) return;
    std::ifstream in(p, std::ios::binary);
    std::ostringstream kept;
    std::string line;
    while (std::getline(in, line)) {
        if (in.eof() && !line.empty()) break;  // unterminated line
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("seq")) break;
        if (j["seq"].get<std::uint64_t>() > keep_through) break;
        kept << line << '\n';
    }
    in.close();
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << kept.str();
    }
    fs::rename(tmp, p);
}

}  // namespace

RunLogWriter::RunLogWriter(fs::path dir, std::uint64_t next_seq) : dir_(std::move(dir)), next_seq_(next_seq) {
    fs::create_directories(dir_);
    events_ = open_append(dir_ / kEventsFile);
    timing_ = open_append(dir_ / kTimingFile);
    transcripts_ = open_append(dir_ / kTranscriptsFile);
}

void RunLogWriter::add_secret(std::string secret) {
    std::lock_guard lock(mutex_);
    if (!secret.empty()) secrets_.push_back(std::move(secret));
}

std::uint64_t RunLogWriter::next_seq() const {
    std::lock_guard lock(mutex_);
    return next_seq_;
}

void RunLogWriter::write_batch(EventBatch batch) {
    if (batch.empty()) return;
    std::lock_guard lock(mutex_);
    const double now =
        std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    std::string ev_text, timing_text, transcript_text;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto& e = batch[i];
        const std::uint64_t seq = next_seq_++;
        nlohmann::json line = std::move(e.payload);
        line["v"] = kLogSchemaVersion;
        line["seq"] = seq;
        line["kind"] = e.kind;
        if (i + 1 == batch.size()) line["checkpoint"] = true;
        ev_text += line.dump() + '\n';
        timing_text += nlohmann::json{{"seq", seq}, {"wall_time", now}}.dump() + '\n';
        if (e.transcript) {
            nlohmann::json t = std::move(*e.transcript);
            redact_json(t, secrets_);
            t["seq"] = seq;
            transcript_text += t.dump() + '\n';
        }
    }
    // Transcripts and timing first: an event line never exists without its side records.
    transcripts_ << transcript_text;
    transcripts_.flush();
    timing_ << timing_text;
    timing_.flush();
    events_ << ev_text;
    events_.flush();
    if (!events_ || !timing_ || !transcripts_) throw Error(ErrorCode::InvalidArgument, "write to run log failed");
}

LogContents read_event_log(const fs::path& dir, bool tolerate_torn_tail) {
    const fs::path p = dir / kEventsFile;
    if (!fs::exists(p)) throw Error(ErrorCode::MissingRun, "no " + std::string(kEventsFile) + " in " + dir.string());
    std::ifstream in(p, std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    LogContents out;
    const auto corrupt = [&](const std::string& why) {
        const std::string good = out.last_good_seq ? std::to_string(*out.last_good_seq) : "none";
        return Error(ErrorCode::CorruptLog, why + " (last good seq: " + good + ")");
    };

    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const bool terminated = nl != std::string::npos;
        const std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
        pos = terminated ? nl + 1 : text.size();
        if (line.empty()) {
            if (terminated) throw corrupt("blank line");
            break;
        }
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            if (!terminated && tolerate_torn_tail) {
                out.torn_tail = true;
                break;
            }
            throw corrupt(terminated ? "unparseable line" : "truncated final line");
        }
        if (j.value("v", -1) != kLogSchemaVersion) throw corrupt("unsupported schema version");
        if (!j.contains("seq") || !j["seq"].is_number_unsigned()) throw corrupt("event without seq");
        const auto seq = j["seq"].get<std::uint64_t>();
        const std::uint64_t expected = out.last_good_seq ? *out.last_good_seq + 1 : 0;
        if (seq != expected) throw corrupt("sequence gap at seq " + std::to_string(seq));
        if (!j.contains("kind") || !j["kind"].is_string()) throw corrupt("event without kind");
        out.last_good_seq = seq;
        out.events.push_back(std::move(j));
    }
    return out;
}

void truncate_run_log(const fs::path& dir, std::uint64_t keep_through) {
    filter_file(dir / kEventsFile, keep_through);
    filter_file(dir / kTimingFile, keep_through);
    filter_file(dir / kTranscriptsFile, keep_through);
}

std::optional<std::size_t> last_checkpoint(const std::vector<nlohmann::json>& events) {
    for (std::size_t i = events.size(); i-- > 0;)
        if (events[i].value("checkpoint", false)) return i;
    return std::nullopt;
}

}  // namespace smcprog
