#include "rockseg/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace rockseg {
namespace {

// Persistent pool of (thread_count - 1) workers; the calling thread runs
// chunk 0. Workers are lazily (re)built when the count changes.
class Pool {
public:
    static Pool& instance() {
        static Pool p;
        return p;
    }

    void resize(int n) {
        std::lock_guard lk(api_mutex_);
        if (n < 1) n = 1;
        if (n == count_) return;
        stop_workers();
        count_ = n;
        start_workers();
    }

    int count() {
        std::lock_guard lk(api_mutex_);
        return count_;
    }

    void run(std::int64_t begin, std::int64_t end,
             const std::function<void(std::int64_t, std::int64_t)>& fn) {
        std::unique_lock lk(api_mutex_);
        const std::int64_t n = end - begin;
        if (n <= 0) return;
        const int parts = static_cast<int>(std::min<std::int64_t>(count_, n));
        if (parts == 1) {
            fn(begin, end);
            return;
        }
        job_fn_ = &fn;
        job_begin_ = begin;
        job_total_ = n;
        job_parts_ = parts;
        pending_.store(parts - 1, std::memory_order_relaxed);
        {
            std::lock_guard jlk(job_mutex_);
            ++generation_;
        }
        job_cv_.notify_all();
        fn(chunk_begin(0), chunk_end(0));
        std::unique_lock dlk(done_mutex_);
        done_cv_.wait(dlk, [&] { return pending_.load(std::memory_order_acquire) == 0; });
    }

private:
    Pool() : count_(1) {}
    ~Pool() { stop_workers(); }

    std::int64_t chunk_begin(int i) const {
        return job_begin_ + job_total_ * i / job_parts_;
    }
    std::int64_t chunk_end(int i) const {
        return job_begin_ + job_total_ * (i + 1) / job_parts_;
    }

    void start_workers() {
        stop_ = false;
        for (int i = 1; i < count_; ++i) {
            workers_.emplace_back([this, i] { worker_loop(i); });
        }
    }

    void stop_workers() {
        {
            std::lock_guard jlk(job_mutex_);
            stop_ = true;
            ++generation_;
        }
        job_cv_.notify_all();
        for (auto& t : workers_) t.join();
        workers_.clear();
    }

    void worker_loop(int index) {
        std::uint64_t seen = 0;
        for (;;) {
            std::unique_lock jlk(job_mutex_);
            job_cv_.wait(jlk, [&] { return generation_ != seen; });
            seen = generation_;
            if (stop_) return;
            jlk.unlock();
            if (index < job_parts_) {
                (*job_fn_)(chunk_begin(index), chunk_end(index));
                if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                    std::lock_guard dlk(done_mutex_);
                    done_cv_.notify_all();
                }
            }
        }
    }

    std::mutex api_mutex_;
    int count_;
    std::vector<std::thread> workers_;

    std::mutex job_mutex_;
    std::condition_variable job_cv_;
    std::uint64_t generation_ = 0;
    bool stop_ = false;

    const std::function<void(std::int64_t, std::int64_t)>* job_fn_ = nullptr;
    std::int64_t job_begin_ = 0;
    std::int64_t job_total_ = 0;
    int job_parts_ = 1;

    std::atomic<int> pending_{0};
    std::mutex done_mutex_;
    std::condition_variable done_cv_;
};

} // namespace

void set_thread_count(int n) { Pool::instance().resize(n); }

int thread_count() { return Pool::instance().count(); }

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
    Pool::instance().run(begin, end, fn);
}

} // namespace rockseg
