#pragma once

namespace radiart::mc {

// Cube corners: 0 (0,0,0), 1 (1,0,0), 2 (1,1,0), 3 (0,1,0), 4 (0,0,1),
// 5 (1,0,1), 6 (1,1,1), 7 (0,1,1). Edges 0-3 run around the z=0 face,
// 4-7 around z=1, 8-11 are the vertical edges from corners 0-3.
inline constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                      {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
inline constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                            {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

extern const int kTriangles[256][16];

}  // namespace radiart::mc
