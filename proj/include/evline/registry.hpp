#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

namespace evline {

// Shared container of entities mutated structurally by two contexts. The
// registry mutex is a leaf lock: never acquire an entity mutex while holding
// it. Readers either copy the list (snapshot) or keep a cached view that is
// refreshed only when the version changes.
template <class T>
class Registry {
 public:
  using List = std::vector<std::shared_ptr<T>>;

  struct View {
    List items;
    std::uint64_t version = ~std::uint64_t{0};
  };

  void insert(std::shared_ptr<T> item) {
    std::lock_guard lock(mu_);
    items_.push_back(std::move(item));
    version_.fetch_add(1, std::memory_order_release);
  }

  void erase(const T* item) {
    std::lock_guard lock(mu_);
    const auto it = std::find_if(items_.begin(), items_.end(),
                                 [&](const auto& p) { return p.get() == item; });
    if (it == items_.end()) return;
    items_.erase(it);
    version_.fetch_add(1, std::memory_order_release);
  }

  List snapshot() const {
    std::lock_guard lock(mu_);
    return items_;
  }

  const List& refresh(View& view) const {
    const auto v = version_.load(std::memory_order_acquire);
    if (v != view.version) {
      std::lock_guard lock(mu_);
      view.items = items_;
      view.version = version_.load(std::memory_order_relaxed);
    }
    return view.items;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

 private:
  mutable std::mutex mu_;
  List items_;
  std::atomic<std::uint64_t> version_{0};
};

}  // namespace evline
