#include "smcprog/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "smcprog/error.hpp"

namespace smcprog {

namespace {

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Single pass over the template so substituted text is never rescanned.
std::string substitute(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string_view>>& vars) {
    std::string out;
    out.reserve(tmpl.size() + 1024);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const std::size_t open = tmpl.find("{{", i);
        if (open == std::string_view::npos) break;
        const std::size_t close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        const std::string_view key = tmpl.substr(open + 2, close - open - 2);
        const auto it = std::find_if(vars.begin(), vars.end(), [&](const auto& kv) { return kv.first == key; });
        out.append(tmpl.substr(i, open - i));
        if (it != vars.end())
            out.append(it->second);
        else
            out.append(tmpl.substr(open, close + 2 - open));
        i = close + 2;
    }
    out.append(tmpl.substr(i));
    return out;
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string_view rtrim(std::string_view s) {
    const auto e = s.find_last_not_of(" \t\r");
    return e == std::string_view::npos ? std::string_view{} : s.substr(0, e + 1);
}

std::optional<std::string_view> extract_tag(std::string_view raw, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    const auto b = raw.find(open);
    if (b == std::string_view::npos) return std::nullopt;
    const auto start = b + open.size();
    const auto e = raw.find(close, start);
    return raw.substr(start, e == std::string_view::npos ? std::string_view::npos : e - start);
}

std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> lines;
    std::size_t i = 0;
    while (i <= s.size()) {
        const auto nl = s.find('\n', i);
        if (nl == std::string_view::npos) {
            lines.push_back(s.substr(i));
            break;
        }
        lines.push_back(s.substr(i, nl - i));
        i = nl + 1;
    }
    return lines;
}

std::string join_lines(const std::vector<std::string_view>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out.append(lines[i]);
    }
    return out;
}

std::vector<DiffEdit> parse_diff_blocks(std::string_view body) {
    enum class State { Idle, Search, Replace } state = State::Idle;
    std::vector<DiffEdit> edits;
    std::vector<std::string_view> search, replace;
    for (std::string_view line : split_lines(body)) {
        const std::string_view marker = rtrim(line);
        switch (state) {
            case State::Idle:
                if (marker == "<<<<<<< SEARCH") {
                    state = State::Search;
                    search.clear();
                    replace.clear();
                } else if (marker == "=======" || marker == ">>>>>>> REPLACE") {
                    throw Error(ErrorCode::MalformedDiffBlock, "marker outside a SEARCH block");
                }
                break;
            case State::Search:
                if (marker == "=======")
                    state = State::Replace;
                else if (marker == "<<<<<<< SEARCH" || marker == ">>>>>>> REPLACE")
                    throw Error(ErrorCode::MalformedDiffBlock, "SEARCH block without separator");
                else
                    search.push_back(line);
                break;
            case State::Replace:
                if (marker == ">>>>>>> REPLACE") {
                    DiffEdit e{join_lines(search), join_lines(replace)};
                    if (e.search.empty()) throw Error(ErrorCode::MalformedDiffBlock, "empty SEARCH section");
                    edits.push_back(std::move(e));
                    state = State::Idle;
                } else if (marker == "<<<<<<< SEARCH") {
                    throw Error(ErrorCode::MalformedDiffBlock, "unterminated REPLACE section");
                } else {
                    replace.push_back(line);
                }
                break;
        }
    }
    if (state != State::Idle) throw Error(ErrorCode::MalformedDiffBlock, "unterminated SEARCH/REPLACE block");
    if (edits.empty()) throw Error(ErrorCode::MalformedDiffBlock, "no SEARCH/REPLACE blocks");
    return edits;
}

std::string extract_code(std::string_view body) {
    const auto lines = split_lines(body);
    std::size_t open = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).starts_with("```")) {
            open = i;
            break;
        }
    }
    std::string code;
    if (open == lines.size()) {
        code = std::string(trim(body));
    } else {
        std::vector<std::string_view> kept;
        for (std::size_t i = open + 1; i < lines.size(); ++i) {
            if (trim(lines[i]).starts_with("```")) break;
            kept.push_back(lines[i]);
        }
        code = join_lines(kept);
    }
    if (trim(code).empty()) throw Error(ErrorCode::EmptyCode, "CODE section is empty");
    return code;
}

/// Text with trailing blanks removed from each line, plus the original offset of every kept byte.
struct Normalized {
    std::string text;
    std::vector<std::size_t> origin;
};

Normalized strip_trailing_blanks(std::string_view s) {
    Normalized n;
    std::size_t i = 0;
    while (i < s.size()) {
        auto nl = s.find('\n', i);
        const std::size_t end = nl == std::string_view::npos ? s.size() : nl;
        std::size_t keep = end;
        while (keep > i && (s[keep - 1] == ' ' || s[keep - 1] == '\t')) --keep;
        for (std::size_t k = i; k < keep; ++k) {
            n.text.push_back(s[k]);
            n.origin.push_back(k);
        }
        if (nl == std::string_view::npos) break;
        n.text.push_back('\n');
        n.origin.push_back(nl);
        i = nl + 1;
    }
    return n;
}

}  // namespace

// ---------------------------------------------------------------- prompts

std::string format_metrics(const RewardValue& reward) {
    std::string s = "reward: " + format_number(reward.value);
    if (!reward.valid) s += " (evaluation failed)";
    return s;
}

std::string format_inspirations(const std::vector<Inspiration>& inspirations, std::string_view language) {
    std::string out;
    for (std::size_t i = 0; i < inspirations.size(); ++i) {
        if (i) out += "\n\n";
        out += "## Reference Program " + std::to_string(i + 1) + "\n\n";
        out += "Performance metrics:\n" + format_metrics(inspirations[i].reward) + "\n\n";
        out += "```" + std::string(language) + "\n" + inspirations[i].program.source() + "\n```";
    }
    return out;
}

RenderedPrompt render_prompt(KernelId kernel, const Program& parent, std::string_view metrics,
                             const std::vector<Inspiration>& inspirations) {
    const PromptTemplate tpl = prompt_template(kernel);
    const std::string_view language = parent.language_tag();
    const std::string metrics_text = trim(metrics).empty() ? std::string("n/a") : std::string(metrics);
    const std::string inspiration_text = format_inspirations(inspirations, language);
    const std::vector<std::pair<std::string_view, std::string_view>> vars = {
        {"language", language},
        {"code_content", parent.source()},
        {"performance_metrics", metrics_text},
        {"inspiration_section", inspiration_text},
    };
    return {substitute(tpl.system, vars), substitute(tpl.user, vars)};
}

// ---------------------------------------------------------------- parsing

std::string normalize_edit_name(std::string_view name) {
    std::string out;
    for (char c : trim(name)) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isspace(u) || c == '-')
            out.push_back('_');
        else if (std::isalnum(u))
            out.push_back(static_cast<char>(std::tolower(u)));
        else if (c == '_')
            out.push_back('_');
    }
    return out;
}

ParsedResponse parse_response(std::string_view raw, ExpectedPayload expect) {
    ParsedResponse r;
    if (auto name = extract_tag(raw, "NAME")) r.name = normalize_edit_name(*name);
    if (auto desc = extract_tag(raw, "DESCRIPTION")) r.description = std::string(trim(*desc));
    if (expect == ExpectedPayload::Diff) {
        const auto body = extract_tag(raw, "DIFF");
        if (!body) throw Error(ErrorCode::MissingTag, "response has no <DIFF> section");
        r.payload = parse_diff_blocks(*body);
    } else {
        const auto body = extract_tag(raw, "CODE");
        if (!body) throw Error(ErrorCode::MissingTag, "response has no <CODE> section");
        r.payload = extract_code(*body);
    }
    return r;
}

std::string apply_diff(std::string_view source, const std::vector<DiffEdit>& edits, const DiffOptions& options) {
    std::string text(source);
    for (std::size_t idx = 0; idx < edits.size(); ++idx) {
        const DiffEdit& e = edits[idx];
        const std::string where = "edit " + std::to_string(idx + 1);
        if (e.search == e.replace) throw Error(ErrorCode::NoOpEdit, where + ": SEARCH equals REPLACE");
        if (e.search.empty()) throw Error(ErrorCode::NoMatch, where + ": empty SEARCH");

        std::size_t begin, end;
        if (!options.lenient_trailing_whitespace) {
            const auto pos = text.find(e.search);
            if (pos == std::string::npos) throw Error(ErrorCode::NoMatch, where + ": SEARCH not found");
            if (text.find(e.search, pos + 1) != std::string::npos)
                throw Error(ErrorCode::AmbiguousMatch, where + ": SEARCH matches more than one location");
            begin = pos;
            end = pos + e.search.size();
        } else {
            const Normalized hay = strip_trailing_blanks(text);
            const std::string needle = strip_trailing_blanks(e.search).text;
            if (needle.empty()) throw Error(ErrorCode::NoMatch, where + ": blank SEARCH");
            const auto pos = hay.text.find(needle);
            if (pos == std::string::npos) throw Error(ErrorCode::NoMatch, where + ": SEARCH not found");
            if (hay.text.find(needle, pos + 1) != std::string::npos)
                throw Error(ErrorCode::AmbiguousMatch, where + ": SEARCH matches more than one location");
            begin = hay.origin[pos];
            end = hay.origin[pos + needle.size() - 1] + 1;
            // A match ending at a line end also consumes that line's trailing blanks.
            const std::size_t after = pos + needle.size();
            if (after == hay.text.size() || hay.text[after] == '\n')
                while (end < text.size() && (text[end] == ' ' || text[end] == '\t')) ++end;
        }
        text.replace(begin, end - begin, e.replace);
    }
    return text;
}

// ------------------------------------------------------------------ client

std::chrono::milliseconds RetryPolicy::delay(int retry) const {
    const double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, std::max(0, retry - 1));
    const double capped = std::min(ms, static_cast<double>(max_backoff.count()));
    return std::chrono::milliseconds(static_cast<long long>(capped));
}

HttpError::HttpError(int status, const std::string& message)
    : Error(ErrorCode::HttpStatusError, "HTTP " + std::to_string(status) + ": " + message), status_(status) {}

ChatClient::ChatClient(ChatClientConfig config, std::shared_ptr<HttpTransport> transport, Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::vector<AttemptRecord> ChatClient::attempts() const {
    std::lock_guard lock(attempts_mutex_);
    return attempts_;
}

void ChatClient::set_consumed(std::int64_t calls) noexcept { issued_.store(calls); }

std::string ChatClient::build_body(const ChatRequest& request) {
    nlohmann::json body = {
        {"model", request.model},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", request.system}},
                                {{"role", "user"}, {"content", request.user}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    return body.dump();
}

std::string ChatClient::extract_content(const std::string& body) {
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::MalformedApiResponse, "response body is not JSON");
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
        throw Error(ErrorCode::MalformedApiResponse, "response has no choices");
    const auto& choice = doc["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content"))
        throw Error(ErrorCode::MalformedApiResponse, "first choice has no message content");
    const auto& content = choice["message"]["content"];
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
        std::string text;
        for (const auto& part : content)
            if (part.is_object() && part.contains("text") && part["text"].is_string())
                text += part["text"].get<std::string>();
        return text;
    }
    throw Error(ErrorCode::MalformedApiResponse, "message content is not text");
}

std::string ChatClient::chat(const ChatRequest& request) {
    if (config_.request_budget >= 0) {
        std::int64_t used = issued_.load();
        do {
            if (used >= config_.request_budget)
                throw Error(ErrorCode::BudgetExhausted,
                            "request budget of " + std::to_string(config_.request_budget) + " calls used up");
        } while (!issued_.compare_exchange_weak(used, used + 1));
    } else {
        issued_.fetch_add(1);
    }

    const std::string body = build_body(request);
    HttpHeaders headers = {{"Content-Type", "application/json"}};
    if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);

    const int total_attempts = config_.retry.max_retries + 1;
    for (int attempt = 1;; ++attempt) {
        AttemptRecord rec{attempt, 0, {}};
        bool transient = false;
        std::optional<HttpResponse> response;
        try {
            response = transport_->post(config_.base_url, config_.path, body, headers, config_.timeout);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::TransportError) throw;
            rec.error = e.what();
            transient = true;
        }
        if (response) {
            rec.status = response->status;
            transient = response->status == 429 || response->status >= 500;
            if (!transient && (response->status < 200 || response->status >= 300))
                rec.error = response->body.substr(0, 500);
        }
        {
            std::lock_guard lock(attempts_mutex_);
            attempts_.push_back(rec);
        }
        if (response && response->status >= 200 && response->status < 300) return extract_content(response->body);
        if (!transient) throw HttpError(response->status, rec.error);
        if (attempt >= total_attempts) {
            if (response) throw HttpError(response->status, "giving up after " + std::to_string(attempt) + " attempts");
            throw Error(ErrorCode::TransportError,
                        "giving up after " + std::to_string(attempt) + " attempts: " + rec.error);
        }
        sleeper_(config_.retry.delay(attempt));
    }
}

// ------------------------------------------------------------------ kernel

LlmKernel::LlmKernel(std::shared_ptr<ChatClient> client, LlmKernelConfig config)
    : client_(std::move(client)), config_(std::move(config)) {
    if (config_.models.empty()) throw Error(ErrorCode::InvalidConfig, "at least one model is required");
    for (const auto& m : config_.models)
        if (!(m.weight > 0.0)) throw Error(ErrorCode::InvalidConfig, "model weights must be > 0");
}

const std::string& LlmKernel::pick_model(Rng& rng) const {
    double total = 0.0;
    for (const auto& m : config_.models) total += m.weight;
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (const auto& m : config_.models) {
        acc += m.weight;
        if (u < acc) return m.name;
    }
    return config_.models.back().name;
}

ProposalResult LlmKernel::propose(const Program& parent, const MutationContext& context, Rng& rng) const {
    ProposalResult r;
    r.kernel_id = context.kernel_id;
    r.llm_call = true;

    const auto prompt = render_prompt(context.kernel_id, parent, format_metrics(context.parent_reward),
                                      context.inspirations);
    Rng routing = rng.split();
    r.model = pick_model(routing);
    r.system_prompt = prompt.system;
    r.user_prompt = prompt.user;

    ChatRequest req{r.model, prompt.system, prompt.user, config_.temperature, config_.max_tokens};
    try {
        r.raw_response = client_->chat(req);
    } catch (const HttpError& e) {
        // Client-side rejections are per-proposal failures; exhausted 429/5xx are outages.
        if (e.status() == 429 || e.status() >= 500) throw;
        r.failure = e.what();
        return r;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::MalformedApiResponse) throw;
        r.failure = e.what();
        return r;
    }

    try {
        const ParsedResponse parsed =
            parse_response(r.raw_response, is_diff(context.kernel_id) ? ExpectedPayload::Diff : ExpectedPayload::Code);
        std::string source = parsed.is_diff() ? apply_diff(parent.source(), parsed.edits(), config_.diff)
                                              : parsed.code();
        r.candidate = Program(std::move(source), parent.language_tag());
        r.parse_ok = true;
    } catch (const Error& e) {
        r.failure = e.what();
    }
    return r;
}

}  // namespace smcprog
