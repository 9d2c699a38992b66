#include "parsestack/threads.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace pstk {

namespace {

std::atomic<int> g_threads{1};

// Minimal persistent pool; workers are detached and live for the process.
// Only one parallel_for runs at a time (kernels are invoked from the single
// thread that owns the network).
class Pool {
 public:
  static Pool& instance() {
    static Pool p;
    return p;
  }

  void run(int workers, int64_t begin, int64_t end,
           const std::function<void(int64_t, int64_t)>& fn) {
    ensure(workers - 1);
    const int64_t chunk = (end - begin + workers - 1) / workers;
    {
      std::unique_lock<std::mutex> lk(m_);
      fn_ = &fn;
      begin_ = begin;
      end_ = end;
      chunk_ = chunk;
      pending_ = 0;
      for (int i = 1; i < workers; ++i)
        if (begin + chunk * i < end) ++pending_;
      workers_wanted_ = workers;
      ++generation_;
    }
    cv_.notify_all();
    if (begin < std::min(end, begin + chunk)) fn(begin, std::min(end, begin + chunk));
    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    fn_ = nullptr;
  }

 private:
  void ensure(int n) {
    std::unique_lock<std::mutex> lk(m_);
    while (started_ < n) {
      ++started_;
      std::thread([this, idx = started_] { worker(idx); }).detach();
    }
  }

  void worker(int idx) {
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(int64_t, int64_t)>* fn = nullptr;
      int64_t b = 0, e = 0;
      bool mine = false;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        if (fn_ != nullptr && idx < workers_wanted_) {
          b = begin_ + chunk_ * idx;
          e = std::min(end_, b + chunk_);
          if (b < end_) {
            fn = fn_;
            mine = true;
          }
        }
      }
      if (!mine) continue;
      (*fn)(b, e);
      {
        std::unique_lock<std::mutex> lk(m_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  int started_ = 0;
  const std::function<void(int64_t, int64_t)>* fn_ = nullptr;
  int64_t begin_ = 0, end_ = 0, chunk_ = 0;
  int pending_ = 0;
  int workers_wanted_ = 0;
  uint64_t generation_ = 0;
};

}  // namespace

void set_num_threads(int n) { g_threads.store(n < 1 ? 1 : n); }

int num_threads() { return g_threads.load(); }

void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& range_fn) {
  if (begin >= end) return;
  int workers = g_threads.load();
  const int64_t total = end - begin;
  if (workers <= 1 || total < 2) {
    range_fn(begin, end);
    return;
  }
  workers = static_cast<int>(std::min<int64_t>(workers, total));
  Pool::instance().run(workers, begin, end, range_fn);
}

}  // namespace pstk
