#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "reflectsep/image.hpp"

namespace reflectsep {

// 8-bit PNG/JPEG decode; intensities mapped to [0,1] by division by 255.
Image load_image(const std::filesystem::path& path);

// 8-bit save; intensities mapped by round-to-nearest of v*255. Format chosen
// from the file extension (.png, .jpg, .jpeg).
void save_image(const std::filesystem::path& path, const Image& img);

// Directory of images scanned in lexicographic filename order. The ordering is
// part of the determinism contract for batch construction.
struct ImageSet {
    std::vector<std::filesystem::path> files;

    static ImageSet from_directory(const std::filesystem::path& dir);
    std::size_t size() const { return files.size(); }
    Image load(std::size_t i) const { return load_image(files.at(i)); }
};

} // namespace reflectsep
