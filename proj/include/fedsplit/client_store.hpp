#pragma once

#include <string>
#include <vector>

#include "fedsplit/tensor.hpp"

namespace fedsplit {

// One user's on-device state. last_round is the last round index in which the
// user trained, or -1 if the user has never participated.
struct ClientRecord {
    std::string user_id;
    Tensor embedding;
    int last_round = -1;
};

// Per-user private state, kept in user-id order (index == user ordinal).
// Nothing in here may ever reach a server-side aggregate or checkpoint.
struct ClientStore {
    std::vector<ClientRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    ClientRecord& at(std::size_t ordinal) {
        if (ordinal >= records.size()) {
            throw BoundsError("ClientStore: ordinal " + std::to_string(ordinal) +
                              " out of range (" + std::to_string(records.size()) +
                              " users)");
        }
        return records[ordinal];
    }
    const ClientRecord& at(std::size_t ordinal) const {
        return const_cast<ClientStore*>(this)->at(ordinal);
    }

    std::size_t trained_count() const {
        std::size_t n = 0;
        for (const auto& r : records) n += (r.last_round >= 0) ? 1 : 0;
        return n;
    }
};

}  // namespace fedsplit
