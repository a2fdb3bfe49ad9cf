#include "etwadc/lti_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace etwadc::lti {

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void save_matrix_csv(const std::string& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open for writing: " + path);
    }
    out << m.rows() << "," << m.cols() << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) {
                out << ",";
            }
            out << format_double(m(i, j));
        }
        out << "\n";
    }
}

Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path + ": missing dimension header");
    }
    long rows = 0, cols = 0;
    if (std::sscanf(line.c_str(), "%ld,%ld", &rows, &cols) != 2 || rows < 0 || cols < 0) {
        throw ParseError(path + ": malformed dimension header '" + line + "'");
    }
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) {
            throw ParseError(path + ": truncated at row " + std::to_string(i + 2));
        }
        std::stringstream ss(line);
        std::string cell;
        for (long j = 0; j < cols; ++j) {
            if (!std::getline(ss, cell, ',')) {
                throw ParseError(path + ": row " + std::to_string(i + 2) + " has too few columns");
            }
            try {
                m(i, j) = std::stod(cell);
            } catch (const std::exception&) {
                throw ParseError(path + ": bad number '" + cell + "' at row " + std::to_string(i + 2));
            }
        }
    }
    return m;
}

void save_tf_csv(const std::string& path, const TransferFunction& tf) {
    const auto cols = tf.den.size();
    Matrix m = Matrix::Zero(2, static_cast<Eigen::Index>(cols));
    const auto pad = cols - tf.num.size();
    for (size_t i = 0; i < tf.num.size(); ++i) {
        m(0, static_cast<Eigen::Index>(pad + i)) = tf.num[i];
    }
    for (size_t i = 0; i < tf.den.size(); ++i) {
        m(1, static_cast<Eigen::Index>(i)) = tf.den[i];
    }
    save_matrix_csv(path, m);
}

TransferFunction load_tf_csv(const std::string& path) {
    const Matrix m = load_matrix_csv(path);
    if (m.rows() != 2) {
        throw ParseError(path + ": transfer function file must have two rows");
    }
    std::vector<double> num(m.cols()), den(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        num[j] = m(0, j);
        den[j] = m(1, j);
    }
    return TransferFunction(num, den);
}

void save_system_csv(const std::string& dir, const std::string& prefix, const LtiSystem& sys) {
    save_matrix_csv(dir + "/" + prefix + "A.csv", sys.A);
    save_matrix_csv(dir + "/" + prefix + "B.csv", sys.B);
    save_matrix_csv(dir + "/" + prefix + "C.csv", sys.C);
    save_matrix_csv(dir + "/" + prefix + "D.csv", sys.D);
}

LtiSystem load_system_csv(const std::string& dir, const std::string& prefix) {
    return LtiSystem(load_matrix_csv(dir + "/" + prefix + "A.csv"),
                     load_matrix_csv(dir + "/" + prefix + "B.csv"),
                     load_matrix_csv(dir + "/" + prefix + "C.csv"),
                     load_matrix_csv(dir + "/" + prefix + "D.csv"));
}

}  // namespace etwadc::lti
