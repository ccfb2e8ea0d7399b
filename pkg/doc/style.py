from sphinx.pygments_styles import SphinxStyle


class DocStyle (SphinxStyle):
    highlight_color = "#eef3d8"
