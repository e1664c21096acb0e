from typing import List, Sequence, Union

from lxml import etree

from eblc.detectors.base import Annotation, BBox
from .exceptions import MalformedXml, MissingField, DetectorError

_COORDINATES = ('xmin', 'ymin', 'xmax', 'ymax')


class VOCParser:
    """
    Reader and writer for the Pascal VOC annotation subset used here::

        annotation/filename
        annotation/size/{width,height,depth}
        annotation/object/{name, bndbox/{xmin,ymin,xmax,ymax}}

    Box coordinates are taken verbatim as the half-open :class:`BBox` bounds.
    """
    def with_xpath(self, root, xpath: str, path: str):
        result = root.xpath(xpath)
        if not result:
            raise MissingField(path, stage='voc')
        return result[0]

    def _text(self, root, xpath: str, path: str) -> str:
        _element = self.with_xpath(root, xpath, path)
        if _element.text is None or not _element.text.strip():
            raise MissingField(path, stage='voc')
        return _element.text.strip()

    def _coordinate(self, root, name: str) -> int:
        _text = self._text(root, f"./bndbox/{name}", f"object/bndbox/{name}")
        try:
            return int(round(float(_text)))
        except ValueError as exc:
            raise MalformedXml(
                f'Element "object/bndbox/{name}" is not a number: {_text!r}.', stage='voc'
            ) from exc

    def parse(self, xml: Union[str, bytes], frame_id: str = None) -> List[Annotation]:
        """
        Parse VOC XML text into annotations, one per ``object`` element.

        :param xml: XML document
        :type xml: Union[str, bytes]
        :param frame_id: identifier to stamp on annotations, defaults to the
            ``filename`` element without extension
        :type frame_id: str
        :return: annotations in document order
        :rtype: List[Annotation]
        :raises MalformedXml: on XML syntax errors or a wrong root element
        :raises MissingField: naming the path of a missing element
        """
        if isinstance(xml, str):
            xml = xml.encode('utf-8')
        try:
            root = etree.fromstring(xml, parser=etree.XMLParser(resolve_entities=False))
        except etree.XMLSyntaxError as exc:
            raise MalformedXml(f"Invalid annotation XML: {exc}", stage='voc') from exc
        if root.tag != 'annotation':
            raise MalformedXml(f'Expected root element "annotation", got "{root.tag}".', stage='voc')

        if frame_id is None:
            _filename = root.xpath("./filename/text()")
            frame_id = _filename[0].strip().rsplit('.', 1)[0] if _filename else ""

        annotations = []
        for _object in root.xpath("./object"):
            label = self._text(_object, "./name", "object/name")
            self.with_xpath(_object, "./bndbox", "object/bndbox")
            x_min, y_min, x_max, y_max = (self._coordinate(_object, name) for name in _COORDINATES)
            try:
                box = BBox(x_min, y_min, x_max, y_max)
            except DetectorError as exc:
                raise MalformedXml(str(exc), stage='voc') from exc
            annotations.append(Annotation(box=box, class_label=label, frame_id=frame_id))
        return annotations

    def parse_file(self, path: str) -> List[Annotation]:
        with open(path, 'rb') as file:
            return self.parse(file.read())

    def write(
        self, annotations: Sequence[Annotation], frame_id: str, width: int, height: int,
        filename: str = None,
    ) -> bytes:
        """
        Serialise annotations of one frame as VOC XML.

        :return: UTF-8 encoded document
        :rtype: bytes
        """
        root = etree.Element('annotation')
        etree.SubElement(root, 'filename').text = filename or f"{frame_id}.ppm"
        _size = etree.SubElement(root, 'size')
        for tag, value in (('width', width), ('height', height), ('depth', 3)):
            etree.SubElement(_size, tag).text = str(value)
        for annotation in annotations:
            _object = etree.SubElement(root, 'object')
            etree.SubElement(_object, 'name').text = annotation.class_label
            etree.SubElement(_object, 'difficult').text = "0"
            _box = etree.SubElement(_object, 'bndbox')
            for tag, value in zip(_COORDINATES, annotation.box.as_tuple()):
                etree.SubElement(_box, tag).text = str(value)
        return etree.tostring(root, pretty_print=True, xml_declaration=True, encoding='utf-8')


def parse_voc(xml: Union[str, bytes], frame_id: str = None) -> List[Annotation]:
    return VOCParser().parse(xml, frame_id)
