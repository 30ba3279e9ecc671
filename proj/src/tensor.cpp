#include "stbln/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "stbln/errors.hpp"

namespace stbln {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
    }
    if (stbln::numel(shape) != values.size()) {
        throw DimensionError("shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
                             " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = stbln::numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
    const auto n = stbln::numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::eye(std::size_t n) {
    Tensor t = zeros({n, n});
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0;
    return t;
}

detail::TensorImpl& Tensor::impl() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<const double> Tensor::data() const { return impl().data; }

std::span<double> Tensor::mutable_data() {
    auto& i = impl();
    ++i.version;
    return i.data;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
    return impl().data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw DimensionError("index rank does not match shape " + to_string(s));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw DimensionError("index out of range for shape " + to_string(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return impl().data[flat];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
    impl().requires_grad = flag;
    return *this;
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<const double> Tensor::grad_data() const { return impl().grad; }

Tensor Tensor::grad() const {
    auto& i = impl();
    if (i.grad.empty()) return zeros(i.shape);
    return Tensor(i.shape, i.grad);
}

std::span<double> Tensor::grad_buffer() const {
    auto& i = impl();
    if (i.grad.empty()) i.grad.assign(i.data.size(), 0.0);
    return i.grad;
}

void Tensor::accumulate_grad(std::span<const double> g) const {
    auto& i = impl();
    if (g.size() != i.data.size()) {
        throw DimensionError("gradient of size " + std::to_string(g.size()) + " for tensor " + to_string(shape()));
    }
    if (i.grad.empty()) {
        i.grad.assign(g.begin(), g.end());
        return;
    }
    for (std::size_t k = 0; k < g.size(); ++k) i.grad[k] += g[k];
}

void Tensor::zero_grad() const { impl().grad.clear(); }

std::uint64_t Tensor::version() const { return impl().version; }

Tensor Tensor::clone() const { return Tensor(shape(), impl().data, false); }

// ---------------------------------------------------------------------------

namespace {
thread_local GradTape* tls_active_tape = nullptr;
}

GradTape* GradTape::active() { return tls_active_tape; }

void GradTape::record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
    entries_.push_back(Entry{std::move(op), std::move(inputs), std::move(output), std::move(fn)});
}

void GradTape::backward(const Tensor& loss, const std::function<void(const Entry&)>& on_visit) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " +
                            (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    }
    if (entries_.empty()) throw ContractError("backward() on an empty tape");
    Tensor seed = loss;
    seed.zero_grad();
    seed.grad_buffer()[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (on_visit) on_visit(*it);
        if (!it->output.has_grad()) continue;
        it->backward(it->output.grad_data());
    }
    for (auto& e : entries_) {
        for (auto& in : e.inputs) {
            if (in.defined() && in.requires_grad()) in.grad_buffer();
        }
    }
}

TapeScope::TapeScope(GradTape& tape) : previous_(tls_active_tape) { tls_active_tape = &tape; }

TapeScope::~TapeScope() { tls_active_tape = previous_; }

namespace autograd {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (GradTape::active() == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t != nullptr && t->defined() && t->requires_grad(); });
}

void record(std::string op, std::vector<Tensor> inputs, Tensor& output, GradTape::BackwardFn fn) {
    auto* tape = GradTape::active();
    if (tape == nullptr) throw ContractError("autograd::record without an active tape");
    output.set_requires_grad(true);
    tape->record(std::move(op), std::move(inputs), output, std::move(fn));
}

}  // namespace autograd

}  // namespace stbln
