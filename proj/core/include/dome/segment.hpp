#pragma once

#include <cstddef>
#include <vector>

namespace dome {

/// Half-open token index range [begin, end) covering one source statement.
struct Segment {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - begin; }

    friend bool operator==(const Segment& a, const Segment& b) {
        return a.begin == b.begin && a.end == b.end;
    }
};

using Segments = std::vector<Segment>;

}  // namespace dome
