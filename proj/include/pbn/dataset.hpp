#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pbn {

/// Labelled samples in raw feature units.
struct Dataset {
    std::vector<std::string> ids;
    std::vector<Eigen::VectorXd> samples;
    std::vector<int> labels;
    std::vector<int> shape;  // feature layout, e.g. {45, 20}; empty means flat

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    void push_back(std::string id, Eigen::VectorXd x, int label) {
        ids.push_back(std::move(id));
        samples.push_back(std::move(x));
        labels.push_back(label);
    }
};

}  // namespace pbn
