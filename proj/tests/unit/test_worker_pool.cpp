#include <doctest.h>

#include <atomic>
#include <stdexcept>
#include <vector>

#include "fafed/worker_pool.hpp"

using namespace fafed;

TEST_SUITE("worker_pool") {
  TEST_CASE("every index runs exactly once") {
    for (std::size_t workers : {1, 2, 3, 8}) {
      WorkerPool pool(workers);
      CHECK(pool.size() == workers);
      for (std::size_t n : {0, 1, 5, 64, 1000}) {
        std::vector<std::atomic<int>> hits(n);
        pool.parallel_for(n, [&](std::size_t i) { ++hits[i]; });
        for (std::size_t i = 0; i < n; ++i) REQUIRE(hits[i] == 1);
      }
    }
  }

  TEST_CASE("pool is reusable across many rounds") {
    WorkerPool pool(4);
    std::atomic<long> total{0};
    for (int round = 0; round < 500; ++round)
      pool.parallel_for(10, [&](std::size_t i) { total += static_cast<long>(i); });
    CHECK(total == 500L * 45);
  }

  TEST_CASE("exceptions reach the caller") {
    WorkerPool pool(3);
    CHECK_THROWS_AS(pool.parallel_for(9,
                                      [](std::size_t i) {
                                        if (i == 7) throw std::runtime_error("boom");
                                      }),
                    std::runtime_error);
    std::atomic<int> after{0};
    pool.parallel_for(4, [&](std::size_t) { ++after; });
    CHECK(after == 4);
  }

  TEST_CASE("serial_for visits in order") {
    std::vector<std::size_t> seen;
    serial_for(4, [&](std::size_t i) { seen.push_back(i); });
    CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3});
  }
}
