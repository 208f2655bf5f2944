#include "smcprog/eval.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace smcprog {

namespace fs = std::filesystem;

BitstringEvaluator::BitstringEvaluator(int n_bits, double reward_floor) : n_bits_(n_bits), floor_(reward_floor) {}

Evaluation BitstringEvaluator::evaluate(const Program& program) const {
    const auto& s = program.source();
    const auto first = s.find_first_not_of(" \t\r\n");
    const auto last = s.find_last_not_of(" \t\r\n");
    if (first == std::string::npos) return {RewardValue::floor(floor_), "Invalid: blank program"};
    const std::string_view bits(s.data() + first, last - first + 1);
    if (static_cast<int>(bits.size()) != n_bits_)
        return {RewardValue::floor(floor_), "Invalid: expected " + std::to_string(n_bits_) + " bits"};
    int ones = 0;
    for (char c : bits) {
        if (c == '1')
            ++ones;
        else if (c != '0')
            return {RewardValue::floor(floor_), "Invalid: non-binary character"};
    }
    return {RewardValue::ok(static_cast<double>(ones) / n_bits_), {}};
}

RewardValue evaluate_bitstring(const Program& program, int n_bits, double reward_floor) {
    return BitstringEvaluator(n_bits, reward_floor).evaluate(program).reward;
}

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "smcprog-eval-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error(std::strerror(errno));
        path = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

std::string read_tail(const fs::path& p, std::size_t max_bytes) {
    std::ifstream in(p, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() > max_bytes) data = data.substr(data.size() - max_bytes);
    return data;
}

Evaluation failure(const EvalSpec& spec, std::string cause) {
    return {RewardValue::floor(spec.reward_floor), std::move(cause)};
}

Evaluation parse_output(const EvalSpec& spec, const std::string& out) {
    std::string last;
    std::istringstream lines(out);
    for (std::string line; std::getline(lines, line);) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) last = line;
    }
    if (last.empty()) return failure(spec, "BadOutput: no output");
    const auto doc = nlohmann::json::parse(last, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("reward") || !doc["reward"].is_number())
        return failure(spec, "BadOutput: " + last.substr(0, 200));
    const double r = doc["reward"].get<double>();
    if (!std::isfinite(r)) return failure(spec, "BadOutput: non-finite reward");
    return {RewardValue::ok(r), {}};
}

}  // namespace

Evaluation evaluate_subprocess(const Program& program, const EvalSpec& spec) {
    if (spec.command.empty()) return failure(spec, "SpawnError: empty command");
    if (spec.timeout.count() <= 0) return failure(spec, "SpawnError: timeout must be positive");

    std::optional<TempDir> dir;
    try {
        dir.emplace();
    } catch (const std::exception& e) {
        return failure(spec, std::string("SpawnError: ") + e.what());
    }
    const fs::path program_path = dir->path / spec.file_name;
    {
        std::ofstream f(program_path, std::ios::binary);
        f << program.source();
        if (!f) return failure(spec, "SpawnError: cannot write program file");
    }

    std::vector<std::string> argv_s{spec.command};
    bool substituted = false;
    for (const auto& a : spec.args) {
        std::string arg = a;
        if (auto pos = arg.find("{program}"); pos != std::string::npos) {
            arg.replace(pos, 9, program_path.string());
            substituted = true;
        }
        argv_s.push_back(std::move(arg));
    }
    if (!substituted) argv_s.push_back(program_path.string());

    std::vector<std::string> env_s;
    for (const auto& name : spec.env_allow)
        if (const char* v = std::getenv(name.c_str())) env_s.push_back(name + "=" + v);

    std::vector<char*> argv;
    for (auto& s : argv_s) argv.push_back(s.data());
    argv.push_back(nullptr);
    std::vector<char*> envp;
    for (auto& s : env_s) envp.push_back(s.data());
    envp.push_back(nullptr);

    const std::string stderr_path = (dir->path / "stderr.txt").string();
    const std::string workdir = dir->path.string();

    int out_pipe[2];
    int err_pipe[2];
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) return failure(spec, "SpawnError: pipe");
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        return failure(spec, "SpawnError: pipe");
    }

    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
        return failure(spec, "SpawnError: fork");
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        const int errfd = ::open(stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
        if (errfd >= 0) ::dup2(errfd, STDERR_FILENO);
        const int nullfd = ::open("/dev/null", O_RDONLY);
        if (nullfd >= 0) ::dup2(nullfd, STDIN_FILENO);
        if (::chdir(workdir.c_str()) != 0) {
            const int e = errno;
            (void)!::write(err_pipe[1], &e, sizeof e);
            ::_exit(127);
        }
        // execvpe searches PATH of the current process for bare command names.
        ::execvpe(argv[0], argv.data(), envp.data());
        const int e = errno;
        (void)!::write(err_pipe[1], &e, sizeof e);
        ::_exit(127);
    }
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);

    int exec_errno = 0;
    const bool exec_failed = ::read(err_pipe[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno;
    ::close(err_pipe[0]);

    const auto deadline = std::chrono::steady_clock::now() + spec.timeout;
    std::string output;
    bool timed_out = false;
    char buf[4096];
    for (;;) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            timed_out = true;
            break;
        }
        pollfd pfd{out_pipe[0], POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) continue;
        const ssize_t n = ::read(out_pipe[0], buf, sizeof buf);
        if (n > 0) {
            if (output.size() < (1u << 20)) output.append(buf, static_cast<std::size_t>(n));
            continue;
        }
        if (n < 0 && errno == EINTR) continue;
        break;  // EOF
    }
    ::close(out_pipe[0]);

    int status = 0;
    if (!timed_out) {
        // stdout closed; give the process until the deadline to exit.
        for (;;) {
            const pid_t w = ::waitpid(pid, &status, WNOHANG);
            if (w == pid) break;
            if (std::chrono::steady_clock::now() >= deadline) {
                timed_out = true;
                break;
            }
            ::usleep(1000);
        }
    }
    if (timed_out) {
        ::kill(-pid, SIGKILL);
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        return failure(spec, "Timeout: exceeded " + std::to_string(spec.timeout.count()) + " ms");
    }
    if (exec_failed) return failure(spec, std::string("SpawnError: ") + std::strerror(exec_errno));
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        std::string detail = WIFEXITED(status) ? "exit status " + std::to_string(WEXITSTATUS(status))
                                               : "killed by signal " + std::to_string(WTERMSIG(status));
        const std::string tail = read_tail(stderr_path, 300);
        if (!tail.empty()) detail += "; stderr: " + tail;
        return failure(spec, "BadOutput: " + detail);
    }
    return parse_output(spec, output);
}

}  // namespace smcprog
