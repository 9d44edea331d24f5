#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace usm {

using Vec3 = Eigen::Vector3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::MatrixXd;

/// Bad caller-supplied values (empty point sets, negative variances, ...).
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Malformed or truncated files; the message names the offending path/field.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite losses and other numerical aborts.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Global worker cap for parallel loops (1 = serial). Results never depend on it.
void set_thread_count(int n);
int thread_count();

/// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunk boundaries are
/// independent of the worker count, so any per-chunk accumulation that is
/// reduced in chunk order gives scheduling-independent results.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain = 256);

}  // namespace usm
