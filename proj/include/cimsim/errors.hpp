#pragma once

#include <stdexcept>
#include <string>

namespace cimsim {

// Contract violations raised by the simulator. Statistical outcomes
// (a cell failing to verify, endurance wear-out) are reported as return
// values instead; see ProgramOutcome.
enum class Errc {
    AlreadyFormed,
    ReadFromFailed,
    ReadFromUnformed,
    CellNotProgrammable,
    OutOfRange,
    RepairExhausted,
    AccumulatorOverflow,
    ShapeMismatch,
    ModeMismatch,
    AlreadyPruned,
    BadMagic,
    TruncatedFile,
    BadConfig,
    IoError,
};

class SimError : public std::runtime_error {
public:
    SimError(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
    throw SimError(code, what);
}

} // namespace cimsim
