#include "cellnas/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "cellnas/error.hpp"

namespace cellnas {

ValueId Tape::leaf(Tensor value) {
    values_.push_back(std::move(value));
    grads_.emplace_back();
    return values_.size() - 1;
}

ValueId Tape::push(std::string_view op, std::vector<ValueId> inputs, Tensor value, BackwardRule backward) {
    const ValueId id = leaf(std::move(value));
    records_.push_back(Record{op, std::move(inputs), id, std::move(backward)});
    return id;
}

Tensor Tape::grad(ValueId id) const {
    const Tensor& g = grads_.at(id);
    if (g.empty() && !values_[id].empty()) return Tensor(values_[id].shape());
    return g;
}

Tensor& Tape::grad_buffer(ValueId id) {
    Tensor& g = grads_.at(id);
    if (g.empty() && !values_[id].empty()) g = Tensor(values_[id].shape());
    return g;
}

void Tape::clear_grads() {
    for (auto& g : grads_) g = Tensor();
}

void Tape::backward(ValueId output, const Tensor& seed) {
    if (records_.empty() || output >= values_.size()) {
        throw Error(ErrorKind::NoTape, "no recorded computation produces value " + std::to_string(output));
    }
    if (seed.shape() != values_[output].shape()) {
        throw Error(ErrorKind::ShapeMismatch, "seed " + to_string(seed.shape()) + " for value " +
                                                  to_string(values_[output].shape()));
    }
    Tensor& g = grad_buffer(output);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];

    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (it->output > output || grads_[it->output].empty()) continue;
        it->backward(*this, *it);
    }
}

namespace ad {

namespace {

void require_rank2(const Tensor& t, std::string_view op) {
    if (t.rank() != 2) throw Error(ErrorKind::ShapeMismatch, std::string(op) + " needs a matrix, got " + to_string(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, std::string_view op) {
    if (!a.same_shape(b)) {
        throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
}

}  // namespace

ValueId matmul(Tape& t, ValueId a, ValueId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    const std::size_t r = A.shape()[0], k = A.shape()[1], c = B.shape()[1];
    if (B.shape()[0] != k) {
        throw Error(ErrorKind::ShapeMismatch, "matmul " + to_string(A.shape()) + " x " + to_string(B.shape()));
    }
    Tensor C({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A.at(i, p);
            for (std::size_t j = 0; j < c; ++j) C.at(i, j) += aip * B.at(p, j);
        }
    }
    return t.push("matmul", {a, b}, std::move(C), [r, k, c](Tape& tape, const Tape::Record& rec) {
        const ValueId ia = rec.inputs[0], ib = rec.inputs[1];
        const Tensor& gC = tape.grad_buffer(rec.output);
        const Tensor& A = tape.value(ia);
        const Tensor& B = tape.value(ib);
        Tensor& gA = tape.grad_buffer(ia);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j) acc += gC.at(i, j) * B.at(p, j);
                gA.at(i, p) += acc;
            }
        }
        Tensor& gB = tape.grad_buffer(ib);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = A.at(i, p);
                for (std::size_t j = 0; j < c; ++j) gB.at(p, j) += aip * gC.at(i, j);
            }
        }
    });
}

ValueId add(Tape& t, ValueId a, ValueId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    require_same(A, B, "add");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
    return t.push("add", {a, b}, std::move(C), [](Tape& tape, const Tape::Record& rec) {
        const Tensor& g = tape.grad_buffer(rec.output);
        for (ValueId in : rec.inputs) {
            Tensor& gi = tape.grad_buffer(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

ValueId sub(Tape& t, ValueId a, ValueId b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    require_same(A, B, "sub");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] -= B[i];
    return t.push("sub", {a, b}, std::move(C), [](Tape& tape, const Tape::Record& rec) {
        const Tensor& g = tape.grad_buffer(rec.output);
        Tensor& ga = tape.grad_buffer(rec.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        Tensor& gb = tape.grad_buffer(rec.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
}

ValueId scale(Tape& t, ValueId a, double s) {
    Tensor C = t.value(a);
    for (double& v : C.values()) v *= s;
    return t.push("scale", {a}, std::move(C), [s](Tape& tape, const Tape::Record& rec) {
        const Tensor& g = tape.grad_buffer(rec.output);
        Tensor& ga = tape.grad_buffer(rec.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

ValueId add_row_bias(Tape& t, ValueId x, ValueId bias) {
    const Tensor& X = t.value(x);
    const Tensor& b = t.value(bias);
    require_rank2(X, "add_row_bias");
    if (b.size() != X.cols()) {
        throw Error(ErrorKind::ShapeMismatch, "bias " + to_string(b.shape()) + " for " + to_string(X.shape()));
    }
    Tensor Y = X;
    for (std::size_t i = 0; i < Y.rows(); ++i) {
        for (std::size_t j = 0; j < Y.cols(); ++j) Y.at(i, j) += b[j];
    }
    return t.push("add_row_bias", {x, bias}, std::move(Y), [](Tape& tape, const Tape::Record& rec) {
        const Tensor& g = tape.grad_buffer(rec.output);
        Tensor& gx = tape.grad_buffer(rec.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        Tensor& gb = tape.grad_buffer(rec.inputs[1]);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g.at(i, j);
        }
    });
}

ValueId relu(Tape& t, ValueId x) {
    Tensor Y = t.value(x);
    for (double& v : Y.values()) v = v > 0.0 ? v : 0.0;
    return t.push("relu", {x}, std::move(Y), [](Tape& tape, const Tape::Record& rec) {
        const Tensor& g = tape.grad_buffer(rec.output);
        const Tensor& X = tape.value(rec.inputs[0]);
        Tensor& gx = tape.grad_buffer(rec.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (X[i] > 0.0) gx[i] += g[i];
        }
    });
}

ValueId concat_cols(Tape& t, std::span<const ValueId> parts) {
    if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat of nothing");
    const std::size_t rows = t.value(parts[0]).rows();
    std::size_t cols = 0;
    for (ValueId p : parts) {
        require_rank2(t.value(p), "concat_cols");
        if (t.value(p).rows() != rows) throw Error(ErrorKind::ShapeMismatch, "concat_cols row counts differ");
        cols += t.value(p).cols();
    }
    Tensor Y({rows, cols});
    std::size_t offset = 0;
    for (ValueId p : parts) {
        const Tensor& P = t.value(p);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < P.cols(); ++j) Y.at(i, offset + j) = P.at(i, j);
        }
        offset += P.cols();
    }
    return t.push("concat_cols", {parts.begin(), parts.end()}, std::move(Y), [](Tape& tape, const Tape::Record& rec) {
        const Tensor& g = tape.grad_buffer(rec.output);
        std::size_t offset = 0;
        for (ValueId p : rec.inputs) {
            Tensor& gp = tape.grad_buffer(p);
            for (std::size_t i = 0; i < gp.rows(); ++i) {
                for (std::size_t j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(i, offset + j);
            }
            offset += gp.cols();
        }
    });
}

ValueId sum(Tape& t, ValueId x) {
    double s = 0.0;
    for (double v : t.value(x).values()) s += v;
    return t.push("sum", {x}, Tensor::scalar(s), [](Tape& tape, const Tape::Record& rec) {
        const double g = tape.grad_buffer(rec.output)[0];
        for (double& v : tape.grad_buffer(rec.inputs[0]).values()) v += g;
    });
}

ValueId half_squared_norm(Tape& t, ValueId x) {
    double s = 0.0;
    for (double v : t.value(x).values()) s += v * v;
    return t.push("half_squared_norm", {x}, Tensor::scalar(0.5 * s), [](Tape& tape, const Tape::Record& rec) {
        const double g = tape.grad_buffer(rec.output)[0];
        const Tensor& X = tape.value(rec.inputs[0]);
        Tensor& gx = tape.grad_buffer(rec.inputs[0]);
        for (std::size_t i = 0; i < X.size(); ++i) gx[i] += g * X[i];
    });
}

ValueId softmax_cross_entropy(Tape& t, ValueId logits, std::span<const std::size_t> labels) {
    const Tensor& Z = t.value(logits);
    require_rank2(Z, "softmax_cross_entropy");
    const std::size_t batch = Z.rows(), classes = Z.cols();
    if (labels.size() != batch) {
        throw Error(ErrorKind::ShapeMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(batch) + " rows");
    }
    Tensor probs({batch, classes});
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        if (labels[i] >= classes) throw Error(ErrorKind::ShapeMismatch, "label out of range");
        double mx = Z.at(i, 0);
        for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, Z.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            probs.at(i, j) = std::exp(Z.at(i, j) - mx);
            denom += probs.at(i, j);
        }
        for (std::size_t j = 0; j < classes; ++j) probs.at(i, j) /= denom;
        total += std::log(denom) + mx - Z.at(i, labels[i]);
    }
    std::vector<std::size_t> y(labels.begin(), labels.end());
    return t.push("softmax_cross_entropy", {logits}, Tensor::scalar(total / static_cast<double>(batch)),
                  [probs = std::move(probs), y = std::move(y)](Tape& tape, const Tape::Record& rec) {
                      const double g = tape.grad_buffer(rec.output)[0] / static_cast<double>(y.size());
                      Tensor& gz = tape.grad_buffer(rec.inputs[0]);
                      for (std::size_t i = 0; i < probs.rows(); ++i) {
                          for (std::size_t j = 0; j < probs.cols(); ++j) {
                              gz.at(i, j) += g * (probs.at(i, j) - (j == y[i] ? 1.0 : 0.0));
                          }
                      }
                  });
}

}  // namespace ad

}  // namespace cellnas
