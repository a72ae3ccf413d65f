#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace test {

/// Central-difference Jacobian of f: R^n -> R^m at x.
inline Eigen::MatrixXd jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                const std::vector<double>& x, double h = 1e-6) {
    const auto f0 = f(x);
    Eigen::MatrixXd J(static_cast<Eigen::Index>(f0.size()), static_cast<Eigen::Index>(x.size()));
    for (std::size_t c = 0; c < x.size(); ++c) {
        auto xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        const auto fp = f(xp), fm = f(xm);
        for (std::size_t r = 0; r < f0.size(); ++r)
            J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (fp[r] - fm[r]) / (2.0 * h);
    }
    return J;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("lap-" + tag + "-" + std::to_string(rd()) + "-" +
                 std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline double relative_gap(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

}  // namespace test
