#pragma once

#include <string>

#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-enum-enum-conversion"
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#pragma GCC diagnostic pop

#include "lanedet/image.hpp"

namespace lanedet {

// Reads a raster file into a [0,1] RGB float image.
inline Image load_image(const std::string& path) {
    cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
    if (mat.empty()) throw std::runtime_error("load_image: cannot read '" + path + "'");
    Image img(mat.rows, mat.cols, 3);
    for (int y = 0; y < mat.rows; ++y) {
        const cv::Vec3b* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < mat.cols; ++x) {
            img.at(y, x, 0) = row[x][2] / 255.0f;  // OpenCV stores BGR
            img.at(y, x, 1) = row[x][1] / 255.0f;
            img.at(y, x, 2) = row[x][0] / 255.0f;
        }
    }
    return img;
}

inline void save_image(const std::string& path, const Image& img) {
    require(img.channels == 3 || img.channels == 1, "save_image: need 1- or 3-channel image");
    cv::Mat mat(img.h, img.w, CV_8UC3);
    for (int y = 0; y < img.h; ++y) {
        cv::Vec3b* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.w; ++x) {
            auto q = [&](int c) {
                const float v = img.channels == 3 ? img.at(y, x, c) : img.at(y, x, 0);
                return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    if (!cv::imwrite(path, mat)) throw std::runtime_error("save_image: cannot write '" + path + "'");
}

}  // namespace lanedet
