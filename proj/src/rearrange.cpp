// Copyright 2026 The osp-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "osp/rearrange.h"

#include <algorithm>
#include <cctype>
#include <set>

namespace osp {
namespace {

using Group = std::vector<std::string>;

struct Side {
    std::vector<Group> terms;
};

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

Side parse_side(std::string_view s, const std::string& full) {
    Side side;
    std::size_t i = 0;
    auto fail = [&](const std::string& why) -> PatternError {
        return PatternError("rearrange pattern '" + full + "': " + why);
    };
    auto read_name = [&]() {
        const std::size_t start = i;
        while (i < s.size() && is_ident_char(s[i])) ++i;
        if (start == i) throw fail("expected an axis name");
        if (std::isdigit(static_cast<unsigned char>(s[start]))) {
            throw fail("axis names cannot start with a digit");
        }
        return std::string(s.substr(start, i - start));
    };
    while (true) {
        while (i < s.size() && s[i] == ' ') ++i;
        if (i == s.size()) break;
        if (s[i] == '(') {
            ++i;
            Group g;
            while (true) {
                while (i < s.size() && s[i] == ' ') ++i;
                if (i == s.size()) throw fail("unbalanced '('");
                if (s[i] == ')') {
                    ++i;
                    break;
                }
                g.push_back(read_name());
            }
            if (g.empty()) throw fail("empty group");
            side.terms.push_back(std::move(g));
        } else if (s[i] == ')') {
            throw fail("unbalanced ')'");
        } else {
            side.terms.push_back({read_name()});
        }
    }
    if (side.terms.size() != 3) throw fail("each side needs exactly three terms (batch seq chan)");
    if (side.terms[2].size() != 1) throw fail("the channel term must be a single axis");
    return side;
}

std::size_t product(const Group& g, const AxisSizes& sizes) {
    std::size_t p = 1;
    for (const auto& a : g) p *= sizes.at(a);
    return p;
}

// Fills in the extent of the one unnamed axis of `g` so that it spans `extent`.
void infer_group(const Group& g, std::size_t extent, AxisSizes& sizes, const std::string& text) {
    std::size_t known = 1;
    const std::string* unknown = nullptr;
    for (const auto& a : g) {
        auto it = sizes.find(a);
        if (it == sizes.end()) {
            if (unknown != nullptr) {
                throw PatternError("rearrange '" + text + "': cannot infer both '" + *unknown +
                                   "' and '" + a + "'");
            }
            unknown = &a;
        } else {
            if (it->second == 0) {
                throw PatternError("rearrange '" + text + "': axis '" + a + "' has size 0");
            }
            known *= it->second;
        }
    }
    if (unknown != nullptr) {
        if (extent % known != 0) {
            throw PatternError("rearrange '" + text + "': extent " + std::to_string(extent) +
                               " not divisible by " + std::to_string(known));
        }
        sizes[*unknown] = extent / known;
    } else if (known != extent) {
        throw PatternError("rearrange '" + text + "': group of size " + std::to_string(known) +
                           " does not match extent " + std::to_string(extent));
    }
}

// Row-major digits of `index` over the axes in `g`.
void decompose(std::size_t index, const Group& g, const AxisSizes& sizes,
               std::map<std::string_view, std::size_t>& values) {
    for (auto it = g.rbegin(); it != g.rend(); ++it) {
        const std::size_t n = sizes.at(*it);
        values[*it] = index % n;
        index /= n;
    }
}

std::size_t recompose(const Group& g, const AxisSizes& sizes,
                      const std::map<std::string_view, std::size_t>& values) {
    std::size_t index = 0;
    for (const auto& a : g) index = index * sizes.at(a) + values.at(a);
    return index;
}

}  // namespace

RearrangePattern::RearrangePattern(std::string_view pattern) : text_(pattern) {
    const auto arrow = pattern.find("->");
    if (arrow == std::string_view::npos) {
        throw PatternError("rearrange pattern '" + text_ + "' has no '->'");
    }
    Side lhs = parse_side(pattern.substr(0, arrow), text_);
    Side rhs = parse_side(pattern.substr(arrow + 2), text_);
    if (lhs.terms[2] != rhs.terms[2]) {
        throw PatternError("rearrange pattern '" + text_ + "': channel axis must be unchanged");
    }
    in_batch_ = lhs.terms[0];
    in_seq_ = lhs.terms[1];
    out_batch_ = rhs.terms[0];
    out_seq_ = rhs.terms[1];

    std::multiset<std::string> in_axes(in_batch_.begin(), in_batch_.end());
    in_axes.insert(in_seq_.begin(), in_seq_.end());
    std::multiset<std::string> out_axes(out_batch_.begin(), out_batch_.end());
    out_axes.insert(out_seq_.begin(), out_seq_.end());
    if (in_axes != out_axes) {
        throw PatternError("rearrange pattern '" + text_ + "': axes differ between sides");
    }
    if (std::set<std::string>(in_axes.begin(), in_axes.end()).size() != in_axes.size()) {
        throw PatternError("rearrange pattern '" + text_ + "': repeated axis name");
    }
    if (in_axes.count(lhs.terms[2][0]) != 0) {
        throw PatternError("rearrange pattern '" + text_ + "': channel axis reused");
    }
}

IndexMap RearrangePattern::index_map(std::size_t in_batch, std::size_t in_seq,
                                     const AxisSizes& given) const {
    AxisSizes sizes;
    auto is_used = [&](const std::string& a) {
        return std::find(in_batch_.begin(), in_batch_.end(), a) != in_batch_.end() ||
               std::find(in_seq_.begin(), in_seq_.end(), a) != in_seq_.end();
    };
    for (const auto& [name, n] : given) {
        if (is_used(name)) sizes[name] = n;
    }
    infer_group(in_batch_, in_batch, sizes, text_);
    infer_group(in_seq_, in_seq, sizes, text_);

    const std::size_t out_batch = product(out_batch_, sizes);
    const std::size_t out_seq = product(out_seq_, sizes);
    std::vector<Address> entries;
    entries.reserve(out_batch * out_seq);
    std::map<std::string_view, std::size_t> values;
    for (std::size_t b = 0; b < out_batch; ++b) {
        decompose(b, out_batch_, sizes, values);
        for (std::size_t s = 0; s < out_seq; ++s) {
            decompose(s, out_seq_, sizes, values);
            entries.push_back({recompose(in_batch_, sizes, values),
                               recompose(in_seq_, sizes, values)});
        }
    }
    return IndexMap(in_batch, in_seq, out_batch, out_seq, std::move(entries));
}

}  // namespace osp
