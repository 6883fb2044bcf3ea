// Copyright 2026 The comrp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>

#include "comrp/clustering.hpp"
#include "comrp/eigen_symmetric.hpp"
#include "comrp/error.hpp"
#include "comrp/labeling.hpp"
#include "comrp/mask_ingest.hpp"
#include "comrp/metrics.hpp"
#include "comrp/synth.hpp"

namespace py = pybind11;
using namespace comrp;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

GrayImage to_gray(const U8Array& a, const char* what) {
  if (a.ndim() != 2) throw py::value_error(std::string(what) + " must be a 2-D uint8 array");
  GrayImage g(static_cast<std::uint32_t>(a.shape(1)), static_cast<std::uint32_t>(a.shape(0)));
  std::memcpy(g.pixels.data(), a.data(), g.pixels.size());
  return g;
}

U8Array from_gray(const GrayImage& g) {
  U8Array out({static_cast<py::ssize_t>(g.height), static_cast<py::ssize_t>(g.width)});
  std::memcpy(out.mutable_data(), g.pixels.data(), g.pixels.size());
  return out;
}

Matrix to_matrix(const F64Array& a) {
  if (a.ndim() != 2) throw py::value_error("sample matrix must be 2-D (n_samples, n_features)");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::memcpy(m.data().data(), a.data(), m.data().size() * sizeof(double));
  return m;
}

F64Array from_matrix(const Matrix& m) {
  F64Array out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  std::memcpy(out.mutable_data(), m.data().data(), m.data().size() * sizeof(double));
  return out;
}

template <typename T>
py::array_t<T> from_vector(const std::vector<T>& v) {
  py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

AffinityKind parse_affinity(const std::string& s) {
  if (s == "rbf_dense") return AffinityKind::rbf_dense;
  if (s == "knn_graph") return AffinityKind::knn_graph;
  throw py::value_error("affinity must be 'rbf_dense' or 'knn_graph'");
}

Linkage parse_linkage(const std::string& s) {
  if (s == "average") return Linkage::average;
  if (s == "ward") return Linkage::ward;
  throw py::value_error("linkage must be 'average' or 'ward'");
}

py::dict report_dict(const MetricsReport& r) {
  py::list iou;
  for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) {
    if (r.per_class_presence[c])
      iou.append(r.per_class_iou[c]);
    else
      iou.append(py::none());
  }
  py::dict d;
  d["miou"] = r.miou;
  d["pixel_accuracy"] = r.pixel_accuracy;
  d["per_class_iou"] = iou;
  d["per_class_accuracy"] = r.per_class_accuracy;
  d["class_names"] = r.class_names;
  return d;
}

py::array_t<std::uint64_t> counts_array(const ConfusionMatrix& conf) {
  py::array_t<std::uint64_t> out({static_cast<py::ssize_t>(conf.n_classes), static_cast<py::ssize_t>(conf.n_classes + 1)});
  std::copy(conf.counts.begin(), conf.counts.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_comrp, m) {
  m.doc() = "Core routines of the comrp pseudo-labeling toolkit.";
  m.attr("IGNORE_LABEL") = kIgnoreLabel;

  static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).inc_ref().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object instance = py::handle(error_type)(e.what());
      instance.attr("kind") = e.kind();
      PyErr_SetObject(error_type, instance.ptr());
    }
  });

  m.def(
      "rle_encode", [](const U8Array& mask) { return rle_encode(to_gray(mask, "mask")); }, py::arg("mask"),
      "Row-major run lengths of a 0/1 mask, starting with a background run.");
  m.def(
      "rle_decode",
      [](const Rle& rle, std::uint32_t width, std::uint32_t height) { return from_gray(rle_decode(rle, width, height)); },
      py::arg("rle"), py::arg("width"), py::arg("height"));

  m.def(
      "kmeans",
      [](const F64Array& x, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter, double tol,
         std::uint32_t n_init) {
        const Matrix mx = to_matrix(x);
        KMeansResult r;
        {
          py::gil_scoped_release release;
          r = kmeans(mx, k, seed, max_iter, tol, n_init);
        }
        py::dict d;
        d["labels"] = from_vector(r.labels);
        d["centroids"] = from_matrix(r.centroids);
        d["inertia"] = r.inertia;
        d["iterations"] = r.iterations;
        d["inertia_history"] = r.inertia_history;
        return d;
      },
      py::arg("x"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 300, py::arg("tol") = 1e-6,
      py::arg("n_init") = 10);

  m.def(
      "kmedoids",
      [](const F64Array& x, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter, std::uint64_t exact_budget) {
        const Matrix mx = to_matrix(x);
        KMedoidsResult r;
        {
          py::gil_scoped_release release;
          r = kmedoids(mx, k, seed, max_iter, exact_budget);
        }
        py::dict d;
        d["labels"] = from_vector(r.labels);
        d["medoids"] = r.medoids;
        d["cost"] = r.cost;
        d["swaps"] = r.swaps;
        d["exact"] = r.exact;
        return d;
      },
      py::arg("x"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iter") = 300,
      py::arg("exact_budget") = kMedoidsExactBudget);

  m.def(
      "agglomerative",
      [](const F64Array& x, std::uint32_t k, const std::string& linkage) {
        const Matrix mx = to_matrix(x);
        const Linkage l = parse_linkage(linkage);
        py::gil_scoped_release release;
        return agglomerative(mx, k, l);
      },
      py::arg("x"), py::arg("k"), py::arg("linkage") = "average");

  auto spectral_dict = [](const SpectralResult& r) {
    py::dict d;
    d["labels"] = from_vector(r.labels);
    d["embedding"] = from_matrix(r.embedding);
    d["sigma"] = r.sigma;
    d["isolated_vertices"] = r.isolated_vertices;
    return d;
  };

  m.def(
      "spectral",
      [spectral_dict](const F64Array& x, std::uint32_t k, std::uint64_t seed, const std::string& affinity,
                      std::optional<double> sigma, std::uint32_t knn) {
        const Matrix mx = to_matrix(x);
        SpectralOptions opt;
        opt.affinity = parse_affinity(affinity);
        opt.fixed_sigma = sigma;
        opt.knn = knn;
        SpectralResult r;
        {
          py::gil_scoped_release release;
          r = spectral(mx, k, seed, opt);
        }
        return spectral_dict(r);
      },
      py::arg("x"), py::arg("k"), py::arg("seed") = 0, py::arg("affinity") = "rbf_dense",
      py::arg("sigma") = std::nullopt, py::arg("knn") = 10,
      "Normalized spectral clustering. sigma=None uses the median pairwise distance.");

  m.def(
      "spectral_from_affinity",
      [spectral_dict](const F64Array& a, std::uint32_t k, std::uint64_t seed) {
        const Matrix ma = to_matrix(a);
        SpectralResult r;
        {
          py::gil_scoped_release release;
          r = spectral_from_affinity(ma, k, seed);
        }
        return spectral_dict(r);
      },
      py::arg("affinity"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "eig_symmetric",
      [](const F64Array& a) {
        const SymmetricEigen e = eig_symmetric(to_matrix(a));
        return py::make_tuple(from_vector(e.values), from_matrix(e.vectors));
      },
      py::arg("a"), "Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.");

  m.def(
      "confusion",
      [](const U8Array& gt, const U8Array& pred, std::uint32_t n_classes) {
        return counts_array(confusion(to_gray(gt, "gt"), to_gray(pred, "pred"), n_classes));
      },
      py::arg("gt"), py::arg("pred"), py::arg("n_classes"),
      "Counts of shape (n_classes, n_classes + 1); the last column holds unlabeled predictions.");

  m.def(
      "metrics_report",
      [](const U8Array& gt, const U8Array& pred, std::uint32_t n_classes) {
        return report_dict(report(confusion(to_gray(gt, "gt"), to_gray(pred, "pred"), n_classes)));
      },
      py::arg("gt"), py::arg("pred"), py::arg("n_classes"));

  m.def(
      "evaluate_dirs",
      [](const std::filesystem::path& gt_dir, const std::filesystem::path& pred_dir, std::uint32_t n_classes) {
        return report_dict(report(evaluate_dirs(gt_dir, pred_dir, n_classes)));
      },
      py::arg("gt_dir"), py::arg("pred_dir"), py::arg("n_classes"));

  m.def(
      "synth_generate",
      [](const std::filesystem::path& out_dir, std::uint64_t seed, std::uint32_t n_images, std::uint32_t image_size,
         double split_prob, std::uint32_t dilate_px) {
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.n_images = n_images;
        cfg.image_size = image_size;
        cfg.mask_noise.split_prob = split_prob;
        cfg.mask_noise.dilate_px = dilate_px;
        SynthDataset ds;
        {
          py::gil_scoped_release release;
          ds = generate(cfg);
          write_dataset(ds, out_dir);
        }
        std::size_t masks = 0;
        for (const auto& f : ds.masks) masks += f.masks.size();
        py::dict d;
        d["class_names"] = ds.class_names;
        d["n_images"] = ds.images.size();
        d["n_masks"] = masks;
        d["n_objects"] = ds.object_count;
        return d;
      },
      py::arg("out_dir"), py::arg("seed") = 7, py::arg("n_images") = 40, py::arg("image_size") = 256,
      py::arg("split_prob") = 0.0, py::arg("dilate_px") = 0,
      "Writes a synthetic dataset with exact ground truth and mask proposals to out_dir.");
}
