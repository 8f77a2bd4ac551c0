#pragma once

#include <Eigen/Dense>
#include <vector>

namespace cped {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using StateList = std::vector<Vec>;

}  // namespace cped
