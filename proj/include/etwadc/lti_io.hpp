#pragma once

#include <string>

#include "etwadc/lti.hpp"

namespace etwadc::lti {

/// Shortest decimal form that round-trips the exact double.
std::string format_double(double v);

/// CSV matrix layout: one header row `rows,cols`, then one CSV line per
/// matrix row. LF line endings, '.' decimal separator.
void save_matrix_csv(const std::string& path, const Matrix& m);
Matrix load_matrix_csv(const std::string& path);

/// A transfer function travels as a 2×(deg+1) matrix: row 0 numerator
/// (zero-padded on the left), row 1 denominator, descending powers of s.
void save_tf_csv(const std::string& path, const TransferFunction& tf);
TransferFunction load_tf_csv(const std::string& path);

/// One file per state-space matrix: <prefix>A.csv, <prefix>B.csv, ...
void save_system_csv(const std::string& dir, const std::string& prefix, const LtiSystem& sys);
LtiSystem load_system_csv(const std::string& dir, const std::string& prefix);

}  // namespace etwadc::lti
