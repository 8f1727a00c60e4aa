#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace rldecode {

static constexpr auto DYN = Eigen::Dynamic;

template <typename T>
using Vec = Eigen::Matrix<T, DYN, 1>;
template <typename T>
using Mat = Eigen::Matrix<T, DYN, DYN>;
template <typename T>
using VecRef = Eigen::Ref<const Vec<T>>;
template <typename T>
using MatRef = Eigen::Ref<const Mat<T>>;
template <typename T>
using Vec2 = Eigen::Matrix<T, 2, 1>;

using VecXd = Vec<double>;
using MatXd = Mat<double>;

using TokenId = std::int32_t;

}  // namespace rldecode
