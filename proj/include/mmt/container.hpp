#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace mmt {

// Named float32 arrays with a structured text header, used for model
// checkpoints and attention traces.  Layout:
//
//   MMTC1\n
//   meta <key> <value>\n            (zero or more)
//   array <name> <rank> <dims...> <byte_offset>\n
//   end\n
//   <raw little-endian float32 payload, arrays in manifest order>
//
// Round-trips are bit-exact: floats are moved as raw 32-bit patterns.

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;

    std::size_t count() const;
};

class Container {
public:
    void set_meta(const std::string& key, const std::string& value);
    bool has_meta(const std::string& key) const;
    // Throws DomainError if the key is absent.
    const std::string& meta(const std::string& key) const;
    const std::vector<std::pair<std::string, std::string>>& metas() const { return metas_; }

    // Throws DomainError on duplicate names or shape/data mismatch.
    void add(NamedArray array);
    void add(const std::string& name, std::vector<int> shape, std::vector<float> data);
    const NamedArray* find(const std::string& name) const;
    // Throws DomainError if absent.
    const NamedArray& get(const std::string& name) const;
    const std::vector<NamedArray>& arrays() const { return arrays_; }

    std::string serialize() const;
    static Container deserialize(const std::string& bytes);

    void save(const std::string& path) const;
    static Container load(const std::string& path);

private:
    std::vector<std::pair<std::string, std::string>> metas_;
    std::vector<NamedArray> arrays_;
};

}  // namespace mmt
