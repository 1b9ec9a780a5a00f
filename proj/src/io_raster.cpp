// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dfd/io.hpp"

namespace dfd {

namespace {

std::string sidecar_path(const std::string& raw_path) {
    std::filesystem::path p(raw_path);
    p.replace_extension(".json");
    return p.string();
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

void write_raw(const std::string& path, const ImageF& img) {
    static_assert(sizeof(float) == 4);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path);
    nlohmann::json side{{"width", img.width}, {"height", img.height}, {"channels", img.channels}};
    write_text_file(sidecar_path(path), side.dump(2) + "\n");
}

void write_raw(const std::string& path, const ImageD& img) {
    write_raw(path, to_float(img));
}

ImageF read_raw(const std::string& path) {
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(read_text_file(sidecar_path(path)));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad sidecar for " + path + ": " + e.what());
    }
    ImageF img(side.at("width").get<int>(), side.at("height").get<int>(),
               side.at("channels").get<int>());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != img.data.size() * sizeof(float)) {
        throw IoError("short read: " + path);
    }
    return img;
}

ImageD read_raw_double(const std::string& path) {
    return to_double(read_raw(path));
}

}  // namespace dfd
