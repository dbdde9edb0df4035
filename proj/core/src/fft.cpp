#include "aberr/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "aberr/error.hpp"

namespace aberr::fft {
namespace {

struct PlanCache {
  std::mutex mutex;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t rows, std::size_t cols, int sign) {
    std::lock_guard lock(mutex);
    auto key = std::make_tuple(rows, cols, sign);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    // Planning needs scratch arrays; FFTW_UNALIGNED lets the plan run on any buffer.
    auto* a = fftw_alloc_complex(rows * cols);
    auto* b = fftw_alloc_complex(rows * cols);
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), a, b, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(a);
    fftw_free(b);
    if (plan == nullptr) throw NumericalError("fftw: failed to create plan");
    plans.emplace(key, plan);
    return plan;
  }
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

void run(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols,
         int sign) {
  if (in.size() != rows * cols || out.size() != rows * cols)
    throw ArgumentError("fft: buffer size does not match shape");
  fftw_plan plan = cache().get(rows, cols, sign);
  if (in.data() == out.data()) {
    std::vector<cplx> copy(in.begin(), in.end());
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(copy.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    return;
  }
  // fftw_execute_dft does not modify the input for out-of-place complex transforms.
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  fftw_execute_dft(plan, src, dst);
}

}  // namespace

void forward(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols) {
  run(in, out, rows, cols, FFTW_FORWARD);
}

void backward(std::span<const cplx> in, std::span<cplx> out, std::size_t rows, std::size_t cols) {
  run(in, out, rows, cols, FFTW_BACKWARD);
}

}  // namespace aberr::fft
