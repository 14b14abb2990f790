#pragma once

#include <string>
#include <vector>

#include "ilrm/camera.hpp"
#include "ilrm/image.hpp"

namespace ilrm {

// Posed images of one scene. near/far bound the decoded depth range in the
// scene's own units.
struct Scene {
    std::string name;
    std::vector<Camera> cameras;
    std::vector<Image> images;
    double near = 0.1;
    double far = 100.0;

    std::size_t size() const { return cameras.size(); }

    std::vector<Vec3> positions() const {
        std::vector<Vec3> p;
        for (const auto& c : cameras) p.push_back(c.pose.translation);
        return p;
    }
};

} // namespace ilrm
