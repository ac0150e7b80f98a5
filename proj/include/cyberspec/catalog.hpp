#pragma once

// Kernel event catalog monitored on each sensor, grouped by family. The
// `selected` flag marks the 40 events that survive data curation in the
// reference deployment.

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cyberspec/errors.hpp"

namespace cyberspec {

enum class EventFamily { network, virtual_memory, file_systems, scheduler, cpu, device_drivers, random_numbers };

constexpr std::string_view to_string(EventFamily f) {
    switch (f) {
        case EventFamily::network: return "network";
        case EventFamily::virtual_memory: return "virtual_memory";
        case EventFamily::file_systems: return "file_systems";
        case EventFamily::scheduler: return "scheduler";
        case EventFamily::cpu: return "cpu";
        case EventFamily::device_drivers: return "device_drivers";
        case EventFamily::random_numbers: return "random_numbers";
    }
    return "?";
}

inline EventFamily parse_event_family(std::string_view s) {
    for (int i = 0; i <= static_cast<int>(EventFamily::random_numbers); ++i)
        if (to_string(static_cast<EventFamily>(i)) == s) return static_cast<EventFamily>(i);
    throw ConfigError("unknown event family '" + std::string(s) + "'");
}

struct CatalogEntry {
    std::string name;
    EventFamily family;
    bool selected;
};

class EventCatalog {
public:
    explicit EventCatalog(std::vector<CatalogEntry> entries) : entries_(std::move(entries)) {
        std::stable_sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
            return std::tie(a.family, a.name) < std::tie(b.family, b.name);
        });
    }

    std::size_t size() const noexcept { return entries_.size(); }
    const CatalogEntry& operator[](std::size_t i) const { return entries_[i]; }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    std::optional<std::size_t> index_of(std::string_view name) const {
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].name == name) return i;
        return std::nullopt;
    }

    std::size_t require_index(std::string_view name) const {
        if (auto i = index_of(name)) return *i;
        throw ConfigError("event '" + std::string(name) + "' is not in the catalog");
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& e : entries_) out.push_back(e.name);
        return out;
    }

    std::vector<std::string> selected_names() const {
        std::vector<std::string> out;
        for (const auto& e : entries_)
            if (e.selected) out.push_back(e.name);
        return out;
    }

    std::size_t selected_count() const {
        return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.selected; }));
    }

private:
    std::vector<CatalogEntry> entries_;
};

/// The fixed catalog, ordered by family then event name.
inline const EventCatalog& event_catalog() {
    using F = EventFamily;
    static const EventCatalog catalog(std::vector<CatalogEntry>{
        {"tcp:tcp_destroy_sock", F::network, false},
        {"tcp:tcp_probe", F::network, true},
        {"udp:udp_fail_queue_rcv_skb", F::network, false},
        {"net:net_dev_queue", F::network, true},
        {"net:net_dev_xmit", F::network, true},
        {"qdisc:qdisc_dequeue", F::network, false},
        {"skb:consume_skb", F::network, false},
        {"skb:kfree_skb", F::network, true},
        {"skb:skb_copy_datagram_iovec", F::network, false},
        {"sock:inet_sock_set_state", F::network, false},
        {"fib:fib_table_lookup", F::network, true},

        {"writeback:global_dirty_state", F::virtual_memory, true},
        {"writeback:sb_clear_inode_writeback", F::virtual_memory, true},
        {"writeback:wbc_writepage", F::virtual_memory, true},
        {"writeback:writeback_dirty_inode", F::virtual_memory, false},
        {"writeback:writeback_dirty_inode_enqueue", F::virtual_memory, true},
        {"writeback:writeback_dirty_page", F::virtual_memory, true},
        {"writeback:writeback_mark_inode_dirty", F::virtual_memory, true},
        {"writeback:writeback_pages_written", F::virtual_memory, false},
        {"writeback:writeback_single_inode", F::virtual_memory, true},
        {"writeback:writeback_write_inode", F::virtual_memory, true},
        {"writeback:writeback_written", F::virtual_memory, true},
        {"kmem:kfree", F::virtual_memory, false},
        {"kmem:kmalloc", F::virtual_memory, false},
        {"kmem:kmem_cache_alloc", F::virtual_memory, true},
        {"kmem:kmem_cache_free", F::virtual_memory, true},
        {"kmem:mm_page_alloc", F::virtual_memory, false},
        {"kmem:mm_page_alloc_zone_locked", F::virtual_memory, false},
        {"kmem:mm_page_free", F::virtual_memory, true},
        {"kmem:mm_page_pcpu_drain", F::virtual_memory, true},
        {"page-faults", F::virtual_memory, true},
        {"pagemap:mm_lru_insertion", F::virtual_memory, true},

        {"jbd2:jbd2_handle_start", F::file_systems, true},
        {"jbd2:jbd2_start_commit", F::file_systems, true},
        {"block:block_bio_backmerge", F::file_systems, false},
        {"block:block_bio_remap", F::file_systems, true},
        {"block:block_dirty_buffer", F::file_systems, true},
        {"block:block_getrq", F::file_systems, true},
        {"block:block_touch_buffer", F::file_systems, true},
        {"block:block_unplug", F::file_systems, true},
        {"cachefiles:cachefiles_create", F::file_systems, false},
        {"cachefiles:cachefiles_lookup", F::file_systems, false},
        {"cachefiles:cachefiles_mark_active", F::file_systems, false},
        {"filemap:mm_filemap_add_to_page_cache", F::file_systems, true},

        {"sched:sched_process_exec", F::scheduler, true},
        {"sched:sched_process_free", F::scheduler, true},
        {"sched:sched_process_wait", F::scheduler, true},
        {"sched:sched_switch", F::scheduler, false},
        {"signal:signal_deliver", F::scheduler, false},
        {"signal:signal_generate", F::scheduler, true},
        {"task:task_newtask", F::scheduler, true},
        {"cpu-migrations", F::scheduler, true},
        {"cs", F::scheduler, false},
        {"alarmtimer:alarmtimer_fired", F::scheduler, false},
        {"alarmtimer:alarmtimer_start", F::scheduler, false},

        {"clk:clk_set_rate", F::cpu, true},
        {"rpm:rpm_resume", F::cpu, false},
        {"rpm:rpm_suspend", F::cpu, false},
        {"ipi:ipi_raise", F::cpu, true},

        {"irq:irq_handler_entry", F::device_drivers, true},
        {"mmc:mmc_request_start", F::device_drivers, false},
        {"preemptirq:irq_enable", F::device_drivers, false},
        {"gpio:gpio_value", F::device_drivers, false},
        {"dma_fence:dma_fence_init", F::device_drivers, false},

        {"random:get_random_bytes", F::random_numbers, true},
        {"random:mix_pool_bytes_nolock", F::random_numbers, true},
        {"random:urandom_read", F::random_numbers, true},
    });
    return catalog;
}

}  // namespace cyberspec
