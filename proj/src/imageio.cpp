#include "reflectsep/imageio.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "reflectsep/errors.hpp"

namespace reflectsep {

Image load_image(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw DataError("cannot decode image: " + path.string());
    if (m.depth() != CV_8U) throw DataError("only 8-bit images supported: " + path.string());
    const int stride = m.channels();
    if (stride != 1 && stride != 3 && stride != 4)
        throw DataError("unsupported channel count: " + path.string());
    Image out(m.rows, m.cols, stride == 1 ? 1 : 3);
    for (int y = 0; y < m.rows; ++y) {
        const unsigned char* row = m.ptr<unsigned char>(y);
        for (int x = 0; x < m.cols; ++x) {
            if (stride == 1) {
                out.at(y, x, 0) = row[x] / 255.0;
            } else {
                // OpenCV stores BGR(A).
                out.at(y, x, 0) = row[stride * x + 2] / 255.0;
                out.at(y, x, 1) = row[stride * x + 1] / 255.0;
                out.at(y, x, 2) = row[stride * x + 0] / 255.0;
            }
        }
    }
    return out;
}

void save_image(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw DataError("save_image: channels must be 1 or 3");
    cv::Mat m(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3);
    auto to_byte = [](double v) {
        const double s = std::round(std::min(std::max(v, 0.0), 1.0) * 255.0);
        return static_cast<unsigned char>(s);
    };
    for (int y = 0; y < img.height; ++y) {
        unsigned char* row = m.ptr<unsigned char>(y);
        for (int x = 0; x < img.width; ++x) {
            if (img.channels == 1) {
                row[x] = to_byte(img.at(y, x, 0));
            } else {
                row[3 * x + 0] = to_byte(img.at(y, x, 2));
                row[3 * x + 1] = to_byte(img.at(y, x, 1));
                row[3 * x + 2] = to_byte(img.at(y, x, 0));
            }
        }
    }
    if (!cv::imwrite(path.string(), m))
        throw DataError("cannot write image: " + path.string());
}

ImageSet ImageSet::from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw DataError("not a directory: " + dir.string());
    ImageSet set;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") set.files.push_back(e.path());
    }
    std::sort(set.files.begin(), set.files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    return set;
}

} // namespace reflectsep
