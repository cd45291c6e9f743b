#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evdi/events.hpp"
#include "evdi/tensor.hpp"

namespace evdi {

enum class StackNormalization { per_stack_max, global_max };

struct StackerConfig {
  int stacks = 3;
  StackNormalization normalization = StackNormalization::per_stack_max;
};

// Multi-stack control tensor for one target frame, shape [2*S, H, W].
// Channel 2m holds positive-event counts of stack m, channel 2m+1 the negative
// counts. Stack m keeps the ceil(N / 2^m) most recent events of the window,
// widened to every event sharing the cutoff timestamp.
Tensor multistack_counts(const EventStream& stream, std::uint64_t t_prev, std::uint64_t t_target,
                         const StackerConfig& cfg);

// multistack_counts normalized into [0, 1] per cfg.normalization.
Tensor build_multistack(const EventStream& stream, std::uint64_t t_prev, std::uint64_t t_target,
                        const StackerConfig& cfg);

// One tensor per frame: a zero tensor for frame 0, then the multistack over
// (t_i, t_{i+1}] for frame i+1.
std::vector<Tensor> build_control_sequence(const EventStream& stream,
                                           const std::vector<std::uint64_t>& frame_times,
                                           const StackerConfig& cfg);

// Writes channel c of a stack tensor to `<prefix>_cC.pgm`.
void dump_stack_pgm(const Tensor& stack, const std::string& prefix);

}  // namespace evdi
