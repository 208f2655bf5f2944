#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

#include "smcprog/core.hpp"

namespace smcprog {

/// Result of one evaluation. cause is empty for valid rewards and names the
/// failure (SpawnError, Timeout, BadOutput, Invalid, ...) otherwise.
struct Evaluation {
    RewardValue reward;
    std::string cause;
};

/// Reward oracle. Implementations never throw; failures come back as the
/// reward floor with valid = false.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    [[nodiscard]] virtual Evaluation evaluate(const Program& program) const = 0;
    [[nodiscard]] virtual bool deterministic() const { return true; }
};

/// Desk-scale fixture: the program is a string over {0,1} of length n_bits
/// (surrounding whitespace ignored); reward = popcount / n_bits.
class BitstringEvaluator final : public Evaluator {
public:
    explicit BitstringEvaluator(int n_bits, double reward_floor = 0.0);
    [[nodiscard]] Evaluation evaluate(const Program& program) const override;
    [[nodiscard]] int n_bits() const noexcept { return n_bits_; }

private:
    int n_bits_;
    double floor_;
};

RewardValue evaluate_bitstring(const Program& program, int n_bits, double reward_floor = 0.0);

/// Subprocess protocol: the program source is written to a file inside a
/// fresh temporary directory, the command is run there with the file path
/// substituted for "{program}" in args (appended when no arg mentions it),
/// and the last non-empty stdout line must be a JSON object
/// {"reward": <finite number>}.
struct EvalSpec {
    std::string command;
    std::vector<std::string> args;
    std::chrono::milliseconds timeout{90'000};
    double reward_floor = 0.0;
    std::string file_name = "program.txt";
    /// Variables copied from the parent environment; nothing else is passed.
    std::vector<std::string> env_allow = {"PATH", "HOME", "LANG", "PYTHONPATH"};
};

Evaluation evaluate_subprocess(const Program& program, const EvalSpec& spec);

class SubprocessEvaluator final : public Evaluator {
public:
    explicit SubprocessEvaluator(EvalSpec spec) : spec_(std::move(spec)) {}
    [[nodiscard]] Evaluation evaluate(const Program& program) const override {
        return evaluate_subprocess(program, spec_);
    }
    [[nodiscard]] const EvalSpec& spec() const noexcept { return spec_; }

private:
    EvalSpec spec_;
};

}  // namespace smcprog
