#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "memos/image.hpp"

namespace memos {

// Static plot rendering (histograms, PR curves, mask overlays). All plots are
// drawn into plain PNGs; no interactive backend.

// Bar/step histogram of one or more binned series sharing the range [lo, hi].
void plot_histogram(const std::filesystem::path& path, const std::string& title, double lo,
                    double hi, const std::vector<std::pair<std::string, std::vector<int64_t>>>& series);

// Precision-recall curves: per series a list of (recall, precision) points.
void plot_pr_curve(const std::filesystem::path& path, const std::string& title,
                   const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& curves);

// Image with a red overlay proportional to mask values in [0,1] (row-major
// h*w vector).
void plot_mask_overlay(const std::filesystem::path& path, const ImageU8& image,
                       const std::vector<double>& mask);

}  // namespace memos
