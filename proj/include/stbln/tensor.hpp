#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stbln {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::uint64_t version = 0;
};
}  // namespace detail

/// Dense row-major tensor of doubles.
///
/// A Tensor is a shared handle: copies alias the same storage. Values
/// produced by operations are never modified afterwards; only leaves
/// (parameters and inputs) are written through mutable_data(), which bumps
/// the version counter so caches keyed on it can invalidate.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor eye(std::size_t n);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool flag);

    bool has_grad() const;
    /// Gradient values; empty span when nothing has been accumulated.
    std::span<const double> grad_data() const;
    /// Gradient as a tensor of the same shape (zeros when none).
    Tensor grad() const;
    /// Zero-initialised on first access.
    std::span<double> grad_buffer() const;
    void accumulate_grad(std::span<const double> g) const;
    void zero_grad() const;

    std::uint64_t version() const;
    /// Deep copy of the values, detached from any tape.
    Tensor clone() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    detail::TensorImpl& impl() const;
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of the differentiable operations executed while the tape
/// is active. backward() replays it in exact reverse order.
class GradTape {
public:
    using BackwardFn = std::function<void(std::span<const double> output_grad)>;

    struct Entry {
        std::string op;
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn backward;
    };

    void record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

    /// Seeds d(loss)/d(loss) = 1 and propagates. Afterwards every input of a
    /// recorded op that requires grad holds a gradient (zeros when unused).
    void backward(const Tensor& loss, const std::function<void(const Entry&)>& on_visit = {});

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<Entry>& entries() const { return entries_; }
    void clear() { entries_.clear(); }

    /// Tape that operations record into on this thread, or nullptr.
    static GradTape* active();

private:
    friend class TapeScope;
    std::vector<Entry> entries_;
};

/// Makes a tape active for the current thread for the scope's lifetime.
class TapeScope {
public:
    explicit TapeScope(GradTape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    GradTape* previous_;
};

namespace autograd {

/// True when a tape is active and any input requires grad.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Marks `output` as requiring grad and appends the op to the active tape.
void record(std::string op, std::vector<Tensor> inputs, Tensor& output, GradTape::BackwardFn fn);

}  // namespace autograd

}  // namespace stbln
