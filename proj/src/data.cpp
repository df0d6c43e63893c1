#include "fedpall/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fedpall/errors.hpp"
#include "fedpall/rng.hpp"

namespace fedpall {

namespace {

constexpr std::uint64_t kCenterStream = 1;
constexpr std::uint64_t kClientStreamBase = 0xDA7A0000ULL;

}  // namespace

void validate_drift_spec(const DriftSpec& spec) {
    if (spec.n_clients < 2) {
        throw DomainError("DriftSpec: need at least two clients");
    }
    if (spec.n_classes < 2) {
        throw DomainError("DriftSpec: need at least two classes");
    }
    if (spec.input_dim < 1) {
        throw DomainError("DriftSpec: input_dim must be positive");
    }
    if (spec.samples_per_class < 1) {
        throw DomainError("DriftSpec: samples_per_class must be positive");
    }
    if (spec.center_stddev < 0.0 || spec.noise_stddev < 0.0 || spec.shift_stddev < 0.0) {
        throw DomainError("DriftSpec: stddevs must be nonnegative");
    }
    if (!(spec.scale_min > 0.0) || spec.scale_min > spec.scale_max) {
        throw DomainError("DriftSpec: need 0 < scale_min <= scale_max");
    }
    if (!(spec.test_ratio >= 0.0) || spec.test_ratio >= 1.0) {
        throw DomainError("DriftSpec: test_ratio outside [0, 1)");
    }
}

// Random rotation: two-pass modified Gram-Schmidt QR of a Gaussian matrix.
// Norm-based diagonal keeps R's diagonal positive, which pins the sign of
// each column.
DenseMatrix random_rotation(std::size_t dim, Rng& rng) {
    DenseMatrix a(dim, dim);
    for (double& v : a.data) {
        v = rng.normal();
    }
    DenseMatrix q(dim, dim, 0.0);
    DenseVector col(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < dim; ++i) {
            col[i] = a(i, j);
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double r = 0.0;
                for (std::size_t i = 0; i < dim; ++i) {
                    r += q(i, k) * col[i];
                }
                for (std::size_t i = 0; i < dim; ++i) {
                    col[i] -= r * q(i, k);
                }
            }
        }
        const double nrm = norm2(col);
        if (nrm < 1e-12) {
            throw DomainError("random_rotation: degenerate Gaussian draw");
        }
        for (std::size_t i = 0; i < dim; ++i) {
            q(i, j) = col[i] / nrm;
        }
    }
    return q;
}

DriftSpec drift_free(DriftSpec spec) {
    spec.rotation = false;
    spec.scale_min = 1.0;
    spec.scale_max = 1.0;
    spec.shift_stddev = 0.0;
    return spec;
}

FederatedDataset generate_drifted_dataset(const DriftSpec& spec) {
    validate_drift_spec(spec);
    const std::size_t dim = spec.input_dim;

    Rng root(spec.seed);
    Rng center_rng = root.derive(kCenterStream);
    DenseMatrix centers(spec.n_classes, dim);
    for (double& v : centers.data) {
        v = center_rng.normal(0.0, spec.center_stddev);
    }

    std::size_t n_test = static_cast<std::size_t>(
        std::floor(static_cast<double>(spec.samples_per_class) * spec.test_ratio + 0.5));
    if (spec.samples_per_class - n_test < 1) {
        n_test = spec.samples_per_class - 1;
    }
    const std::size_t n_train = spec.samples_per_class - n_test;

    FederatedDataset out;
    out.n_classes = spec.n_classes;
    out.input_dim = dim;
    out.clients.resize(spec.n_clients);

    DenseVector raw(dim);
    DenseVector mapped(dim);
    for (std::size_t n = 0; n < spec.n_clients; ++n) {
        Rng rng = root.derive(kClientStreamBase + n);

        DenseMatrix rot;
        if (spec.rotation) {
            rot = random_rotation(dim, rng);
        }
        DenseVector scale(dim);
        for (double& s : scale) {
            s = rng.uniform(spec.scale_min, spec.scale_max);
        }
        DenseVector shift(dim);
        for (double& b : shift) {
            b = rng.normal(0.0, spec.shift_stddev);
        }

        ClientDataset& client = out.clients[n];
        client.train_x = DenseMatrix(spec.n_classes * n_train, dim);
        client.test_x = DenseMatrix(spec.n_classes * n_test, dim);
        client.train_y.reserve(spec.n_classes * n_train);
        client.test_y.reserve(spec.n_classes * n_test);

        for (std::size_t k = 0; k < spec.n_classes; ++k) {
            const double* center = centers.row(k);
            for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
                for (std::size_t i = 0; i < dim; ++i) {
                    raw[i] = scale[i] * (center[i] + rng.normal(0.0, spec.noise_stddev));
                }
                if (spec.rotation) {
                    for (std::size_t i = 0; i < dim; ++i) {
                        double acc = shift[i];
                        for (std::size_t j = 0; j < dim; ++j) {
                            acc += rot(i, j) * raw[j];
                        }
                        mapped[i] = acc;
                    }
                } else {
                    for (std::size_t i = 0; i < dim; ++i) {
                        mapped[i] = raw[i] + shift[i];
                    }
                }
                if (s < n_train) {
                    std::memcpy(client.train_x.row(client.train_y.size()), mapped.data(),
                                dim * sizeof(double));
                    client.train_y.push_back(static_cast<int>(k));
                } else {
                    std::memcpy(client.test_x.row(client.test_y.size()), mapped.data(),
                                dim * sizeof(double));
                    client.test_y.push_back(static_cast<int>(k));
                }
            }
        }
    }
    return out;
}

std::string client_csv(const ClientDataset& client) {
    std::string out = "label";
    for (std::size_t j = 0; j < client.train_x.cols; ++j) {
        out += ",f" + std::to_string(j + 1);
    }
    out += "\n";
    char buf[64];
    auto dump_rows = [&](const DenseMatrix& x, const std::vector<int>& y) {
        for (std::size_t i = 0; i < x.rows; ++i) {
            out += std::to_string(y[i]);
            for (std::size_t j = 0; j < x.cols; ++j) {
                std::snprintf(buf, sizeof(buf), ",%.17g", x(i, j));
                out += buf;
            }
            out += "\n";
        }
    };
    dump_rows(client.train_x, client.train_y);
    dump_rows(client.test_x, client.test_y);
    return out;
}

void write_client_csv(const ClientDataset& client, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw UsageError("cannot open for writing: " + path);
    }
    const std::string csv = client_csv(client);
    f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    if (!f) {
        throw UsageError("failed writing: " + path);
    }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

[[noreturn]] void csv_error(const std::string& path, std::size_t line_no,
                            const std::string& message) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + message);
}

struct RawClient {
    DenseMatrix x;
    std::vector<int> y;
};

RawClient read_client_file(const std::string& path, std::size_t& dim_inout) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ParseError("cannot open client file: " + path);
    }
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(f, line)) {
        throw ParseError(path + ": empty dataset file");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const std::vector<std::string> header = split_fields(line);
    if (header.size() < 2 || header[0] != "label") {
        csv_error(path, line_no, "header must be label,f1,...,fd");
    }
    for (std::size_t j = 1; j < header.size(); ++j) {
        if (header[j] != "f" + std::to_string(j)) {
            csv_error(path, line_no, "header must be label,f1,...,fd");
        }
    }
    const std::size_t dim = header.size() - 1;
    if (dim_inout == 0) {
        dim_inout = dim;
    } else if (dim != dim_inout) {
        csv_error(path, line_no,
                  "inconsistent feature count: " + std::to_string(dim) + " here, " +
                      std::to_string(dim_inout) + " in earlier files");
    }

    std::vector<double> values;
    std::vector<int> labels;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != dim + 1) {
            csv_error(path, line_no, "expected " + std::to_string(dim + 1) + " fields, got " +
                                         std::to_string(fields.size()));
        }
        try {
            std::size_t pos = 0;
            const long lbl = std::stol(fields[0], &pos);
            if (pos != fields[0].size() || lbl < 0) {
                throw std::invalid_argument(fields[0]);
            }
            labels.push_back(static_cast<int>(lbl));
        } catch (const std::logic_error&) {
            csv_error(path, line_no, "unknown label '" + fields[0] + "'");
        }
        for (std::size_t j = 1; j <= dim; ++j) {
            try {
                std::size_t pos = 0;
                values.push_back(std::stod(fields[j], &pos));
                if (pos != fields[j].size()) {
                    throw std::invalid_argument(fields[j]);
                }
            } catch (const std::logic_error&) {
                csv_error(path, line_no, "non-numeric field '" + fields[j] + "'");
            }
        }
    }
    if (labels.empty()) {
        throw ParseError(path + ": empty dataset file");
    }
    RawClient out;
    out.x = DenseMatrix(labels.size(), dim);
    out.x.data = std::move(values);
    out.y = std::move(labels);
    return out;
}

}  // namespace

std::vector<ClientDataset> load_csv_clients(std::span<const std::string> paths,
                                            double test_ratio) {
    if (paths.empty()) {
        throw DomainError("load_csv_clients: no client files");
    }
    if (!(test_ratio >= 0.0) || test_ratio >= 1.0) {
        throw DomainError("load_csv_clients: test_ratio outside [0, 1)");
    }
    std::size_t dim = 0;
    std::vector<RawClient> raw;
    raw.reserve(paths.size());
    for (const std::string& path : paths) {
        raw.push_back(read_client_file(path, dim));
    }
    int max_label = 0;
    for (const RawClient& rc : raw) {
        max_label = std::max(max_label, *std::max_element(rc.y.begin(), rc.y.end()));
    }
    const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;

    std::vector<ClientDataset> out;
    out.reserve(raw.size());
    for (std::size_t n = 0; n < raw.size(); ++n) {
        const RawClient& rc = raw[n];
        std::vector<std::vector<int>> by_class(n_classes);
        for (std::size_t i = 0; i < rc.y.size(); ++i) {
            by_class[static_cast<std::size_t>(rc.y[i])].push_back(static_cast<int>(i));
        }
        std::vector<int> train_rows;
        std::vector<int> test_rows;
        for (std::size_t k = 0; k < n_classes; ++k) {
            const std::size_t count = by_class[k].size();
            if (count == 0) {
                throw ParseError(paths[n] + ": class " + std::to_string(k) +
                                 " has no samples (labels must cover 0..K-1 in every file)");
            }
            std::size_t n_test = static_cast<std::size_t>(
                std::floor(static_cast<double>(count) * test_ratio + 0.5));
            if (count - n_test < 1) {
                n_test = count - 1;
            }
            const std::size_t n_train = count - n_test;
            for (std::size_t i = 0; i < count; ++i) {
                (i < n_train ? train_rows : test_rows).push_back(by_class[k][i]);
            }
        }
        ClientDataset client;
        client.train_x = take_rows(rc.x, train_rows);
        client.test_x = take_rows(rc.x, test_rows);
        client.train_y.reserve(train_rows.size());
        for (int i : train_rows) {
            client.train_y.push_back(rc.y[static_cast<std::size_t>(i)]);
        }
        client.test_y.reserve(test_rows.size());
        for (int i : test_rows) {
            client.test_y.push_back(rc.y[static_cast<std::size_t>(i)]);
        }
        out.push_back(std::move(client));
    }
    return out;
}

}  // namespace fedpall
