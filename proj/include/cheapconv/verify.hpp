#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cheapconv::verify {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;  // worst observed error and instance count
    double seconds = 0.0;
};

struct SuiteOptions {
    std::uint64_t seed = 20180215;
    int gradient_instances = 100;
    int conv_shapes = 50;
};

// Each suite draws random instances from a seeded generator and checks one
// property of the numeric kernels against an independent route.
SuiteResult kd_gradient_suite(const SuiteOptions& options);
SuiteResult at_gradient_suite(const SuiteOptions& options);
SuiteResult kd_alpha_zero_suite(const SuiteOptions& options);
SuiteResult at_scale_invariance_suite(const SuiteOptions& options);
SuiteResult grouped_conv_suite(const SuiteOptions& options);
SuiteResult parallel_conv_suite(const SuiteOptions& options);

std::vector<SuiteResult> run_all(const SuiteOptions& options = {});

}  // namespace cheapconv::verify
