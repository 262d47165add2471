#pragma once

#include "gpsim/tasks.hpp"

namespace gpsim {

// Pseudo-future task synthesis: a sequence of increasingly transformed copies
// of the current task, standing in for the unknown remainder of the stream.
enum class SynthesisMethod { Permutation, Rotation, Blurring };

SynthesisMethod synthesis_method_from_string(const std::string& name);
const char* synthesis_method_name(SynthesisMethod m);

struct SynthesisSpec {
    SynthesisMethod method = SynthesisMethod::Permutation;
    int count = 1;                    // pseudo tasks to produce
    int examples_per_task = 0;        // class-stratified subsample of the base train split
    uint64_t seed = 0;                // drives the subsample and per-step transforms
    double rotation_step_degrees = 15.0;  // k-th task rotates by k * step
    double blur_sigma_step = 0.5;         // k-th task blurs with sigma = k * step
    int blur_kernel = 5;
    int first_task_id = 0;            // ids assigned to pseudo tasks; must exceed real ids
    bool include_test = false;        // also transform the base test split
    int test_limit = 0;               // 0 keeps the full test split
};

// Builds spec.count pseudo tasks from the base task. One class-stratified
// subsample of the base train split is drawn once and reused across the whole
// sequence; labels are preserved. The k-th task (1-based) applies the k-th
// transform step, so later tasks drift further from the base. Rotation and
// blurring require an image shape; rotation resamples bilinearly with
// zero fill outside the frame, blurring uses a normalized Gaussian kernel
// with zero padding.
std::vector<Task> synthesize_sequence(const Task& base, const SynthesisSpec& spec);

// Image helpers (exposed for direct testing).
Eigen::VectorXd rotate_image(const Eigen::VectorXd& img, int height, int width, double degrees);
Eigen::VectorXd blur_image(const Eigen::VectorXd& img, int height, int width, double sigma,
                           int kernel);

}  // namespace gpsim
